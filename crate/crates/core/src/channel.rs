//! Synthetic optical channel: r[n] = gain * (x * h)[n - delay] + i[n] + w[n].
//!
//! Ambient light is modelled parametrically by [`InterferenceSpec`]. All
//! randomness flows from an [`RngSeed`]: the pair (seed, stream_id) selects a
//! ChaCha8 key and stream, and [`RngSeed::derive`] hands out independent
//! sub-streams so acquisition captures, data-phase interference and receiver
//! noise never share random numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ppm::SampleBuffer;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("autoregressive coefficients {0:?} do not define a stable process")]
    UnstableAr(Vec<f64>),
    #[error("{name} must be finite and >= 0, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("hum with fundamental {fundamental_hz} Hz and {harmonics} harmonics exceeds Nyquist at {sample_rate} S/s")]
    HumAboveNyquist {
        fundamental_hz: f64,
        harmonics: usize,
        sample_rate: f64,
    },
    #[error("hum has {amplitudes} harmonic amplitudes but {phases} phases")]
    HumPhaseCount { amplitudes: usize, phases: usize },
    #[error("channel gain must be positive and finite, got {0}")]
    InvalidGain(f64),
    #[error("impulse response must be non-empty and finite")]
    InvalidImpulseResponse,
    #[error("requested an empty capture")]
    ZeroLength,
    #[error("transmitted buffer is empty")]
    EmptyInput,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed plus stream selector for a ChaCha8 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Child stream for `purpose`; distinct purposes give distinct streams.
    pub fn derive(self, purpose: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(purpose)),
        }
    }

    /// Same stream family under a different key.
    pub fn reseed(self, index: u64) -> Self {
        if index == 0 {
            return self;
        }
        Self {
            seed: splitmix64(self.seed ^ splitmix64(index.wrapping_mul(GOLDEN))),
            stream_id: self.stream_id,
        }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

// Sub-stream purposes inside this module.
const STREAM_INTERFERENCE: u64 = 0x11;
const STREAM_NOISE: u64 = 0x22;

/// Linear channel: gain, integer delay, optional short FIR response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub gain: f64,
    #[serde(default)]
    pub delay_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impulse_response: Option<Vec<f64>>,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self::flat(1.0)
    }
}

impl ChannelModel {
    /// Single tap, no delay.
    pub fn flat(gain: f64) -> Self {
        Self {
            gain,
            delay_samples: 0,
            impulse_response: None,
        }
    }

    /// Inverse-square distance surrogate, `g0 / d^2`.
    pub fn at_distance(reference_gain: f64, distance_m: f64) -> Self {
        Self::flat(distance_gain(reference_gain, distance_m))
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(ChannelError::InvalidGain(self.gain));
        }
        if let Some(h) = &self.impulse_response {
            if h.is_empty() || h.iter().any(|v| !v.is_finite()) {
                return Err(ChannelError::InvalidImpulseResponse);
            }
        }
        Ok(())
    }
}

pub fn distance_gain(reference_gain: f64, distance_m: f64) -> f64 {
    reference_gain / (distance_m * distance_m)
}

/// Receiver noise w[n].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub awgn_std: f64,
}

impl NoiseSpec {
    pub fn new(awgn_std: f64) -> Result<Self, ChannelError> {
        let n = Self { awgn_std };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.awgn_std.is_finite() && self.awgn_std >= 0.0) {
            return Err(ChannelError::Negative {
                name: "awgn_std",
                value: self.awgn_std,
            });
        }
        Ok(())
    }
}

/// Generator family for the structured optical interference i[n].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterferenceSpec {
    #[default]
    WhiteOnly,
    /// i[n] = sum_k a_k i[n-k] + e[n], e ~ N(0, driving_std^2).
    AutoRegressive {
        coefficients: Vec<f64>,
        driving_std: f64,
    },
    /// Sum of cosines at integer multiples of the fundamental.
    HarmonicHum {
        fundamental_hz: f64,
        harmonic_amplitudes: Vec<f64>,
        #[serde(default)]
        phases: Vec<f64>,
    },
    DcAmbient {
        level: f64,
    },
    Composite {
        components: Vec<InterferenceSpec>,
    },
}

impl InterferenceSpec {
    pub fn validate(&self, sample_rate: f64) -> Result<(), ChannelError> {
        match self {
            Self::WhiteOnly => Ok(()),
            Self::AutoRegressive {
                coefficients,
                driving_std,
            } => {
                if !(driving_std.is_finite() && *driving_std >= 0.0) {
                    return Err(ChannelError::Negative {
                        name: "driving_std",
                        value: *driving_std,
                    });
                }
                if reflection_coefficients(coefficients).is_none() {
                    return Err(ChannelError::UnstableAr(coefficients.clone()));
                }
                Ok(())
            }
            Self::HarmonicHum {
                fundamental_hz,
                harmonic_amplitudes,
                phases,
            } => {
                if !phases.is_empty() && phases.len() != harmonic_amplitudes.len() {
                    return Err(ChannelError::HumPhaseCount {
                        amplitudes: harmonic_amplitudes.len(),
                        phases: phases.len(),
                    });
                }
                let harmonics = harmonic_amplitudes.len().max(1);
                if !(fundamental_hz.is_finite()
                    && *fundamental_hz >= 0.0
                    && *fundamental_hz < sample_rate / 2.0 / harmonics as f64)
                {
                    return Err(ChannelError::HumAboveNyquist {
                        fundamental_hz: *fundamental_hz,
                        harmonics,
                        sample_rate,
                    });
                }
                if harmonic_amplitudes
                    .iter()
                    .chain(phases.iter())
                    .any(|v| !v.is_finite())
                {
                    return Err(ChannelError::Negative {
                        name: "harmonic_amplitudes",
                        value: f64::NAN,
                    });
                }
                Ok(())
            }
            Self::DcAmbient { level } => {
                if !level.is_finite() {
                    return Err(ChannelError::Negative {
                        name: "level",
                        value: *level,
                    });
                }
                Ok(())
            }
            Self::Composite { components } => {
                components.iter().try_for_each(|c| c.validate(sample_rate))
            }
        }
    }

    /// Every amplitude (driving std, harmonic amplitude, DC level) times `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            Self::WhiteOnly => Self::WhiteOnly,
            Self::AutoRegressive {
                coefficients,
                driving_std,
            } => Self::AutoRegressive {
                coefficients: coefficients.clone(),
                driving_std: driving_std * factor.abs(),
            },
            Self::HarmonicHum {
                fundamental_hz,
                harmonic_amplitudes,
                phases,
            } => Self::HarmonicHum {
                fundamental_hz: *fundamental_hz,
                harmonic_amplitudes: harmonic_amplitudes.iter().map(|a| a * factor).collect(),
                phases: phases.clone(),
            },
            Self::DcAmbient { level } => Self::DcAmbient {
                level: level * factor,
            },
            Self::Composite { components } => Self::Composite {
                components: components.iter().map(|c| c.scaled(factor)).collect(),
            },
        }
    }

    /// Deterministic components advanced by `samples` (negative moves back in time).
    pub fn time_shifted(&self, samples: i64, sample_rate: f64) -> Self {
        match self {
            Self::HarmonicHum {
                fundamental_hz,
                harmonic_amplitudes,
                phases,
            } => {
                let tau = std::f64::consts::TAU;
                let phases = (0..harmonic_amplitudes.len())
                    .map(|h| {
                        let p0 = phases.get(h).copied().unwrap_or(0.0);
                        // reduce the cycle count before scaling to keep precision
                        let cycles = (fundamental_hz * (h + 1) as f64 / sample_rate
                            * samples as f64)
                            .rem_euclid(1.0);
                        (p0 + tau * cycles).rem_euclid(tau)
                    })
                    .collect();
                Self::HarmonicHum {
                    fundamental_hz: *fundamental_hz,
                    harmonic_amplitudes: harmonic_amplitudes.clone(),
                    phases,
                }
            }
            Self::Composite { components } => Self::Composite {
                components: components
                    .iter()
                    .map(|c| c.time_shifted(samples, sample_rate))
                    .collect(),
            },
            other => other.clone(),
        }
    }

    /// Long-run mean square of the generated process.
    ///
    /// Composite power assumes hum components sit at distinct frequencies;
    /// random and periodic parts are then uncorrelated and only the DC levels
    /// interact.
    pub fn expected_power(&self) -> f64 {
        let mean = self.expected_mean();
        self.expected_variance() + mean * mean
    }

    fn expected_mean(&self) -> f64 {
        match self {
            Self::DcAmbient { level } => *level,
            Self::Composite { components } => components.iter().map(|c| c.expected_mean()).sum(),
            _ => 0.0,
        }
    }

    fn expected_variance(&self) -> f64 {
        match self {
            Self::WhiteOnly | Self::DcAmbient { .. } => 0.0,
            Self::AutoRegressive {
                coefficients,
                driving_std,
            } => {
                let ks = reflection_coefficients(coefficients).unwrap_or_default();
                let shrink: f64 = ks.iter().map(|k| 1.0 - k * k).product();
                driving_std * driving_std / shrink
            }
            Self::HarmonicHum {
                harmonic_amplitudes,
                ..
            } => harmonic_amplitudes.iter().map(|a| a * a / 2.0).sum(),
            Self::Composite { components } => {
                components.iter().map(|c| c.expected_variance()).sum()
            }
        }
    }

    fn render(&self, out: &mut [f64], sample_rate: f64, seed: RngSeed) {
        match self {
            Self::WhiteOnly => {}
            Self::AutoRegressive {
                coefficients,
                driving_std,
            } => render_ar(out, coefficients, *driving_std, seed),
            Self::HarmonicHum {
                fundamental_hz,
                harmonic_amplitudes,
                phases,
            } => {
                for (h, &amp) in harmonic_amplitudes.iter().enumerate() {
                    let phase = phases.get(h).copied().unwrap_or(0.0);
                    let omega =
                        std::f64::consts::TAU * fundamental_hz * (h + 1) as f64 / sample_rate;
                    render_cosine(out, amp, omega, phase);
                }
            }
            Self::DcAmbient { level } => out.iter_mut().for_each(|v| *v += level),
            Self::Composite { components } => {
                for (idx, c) in components.iter().enumerate() {
                    c.render(out, sample_rate, seed.derive(idx as u64));
                }
            }
        }
    }
}

/// Step-down recursion on predictor coefficients. `None` when some
/// reflection coefficient reaches the unit circle (unstable or marginal).
pub fn reflection_coefficients(coefficients: &[f64]) -> Option<Vec<f64>> {
    if coefficients.iter().any(|a| !a.is_finite()) {
        return None;
    }
    let mut a = coefficients.to_vec();
    let mut ks = vec![0.0; a.len()];
    for m in (1..=a.len()).rev() {
        let k = a[m - 1];
        if k.abs() >= 1.0 {
            return None;
        }
        ks[m - 1] = k;
        let denom = 1.0 - k * k;
        let prev: Vec<f64> = (1..m)
            .map(|j| (a[j - 1] + k * a[m - j - 1]) / denom)
            .collect();
        a.truncate(m - 1);
        a.copy_from_slice(&prev);
    }
    Some(ks)
}

fn ar_warmup(order: usize) -> usize {
    1000.max(10 * order)
}

fn render_ar(out: &mut [f64], coefficients: &[f64], driving_std: f64, seed: RngSeed) {
    let q = coefficients.len();
    let mut rng = seed.rng();
    let warmup = ar_warmup(q);
    // history[0] is the most recent sample
    let mut history = vec![0.0f64; q];
    let mut step = |rng: &mut ChaCha8Rng| {
        let e: f64 = rng.sample(StandardNormal);
        let mut v = driving_std * e;
        for (a, h) in coefficients.iter().zip(&history) {
            v += a * h;
        }
        if q > 0 {
            history.rotate_right(1);
            history[0] = v;
        }
        v
    };
    for _ in 0..warmup {
        step(&mut rng);
    }
    for o in out.iter_mut() {
        *o += step(&mut rng);
    }
}

fn render_cosine(out: &mut [f64], amplitude: f64, omega: f64, phase: f64) {
    // Phasor rotation, re-anchored to an exact cos/sin every block.
    const BLOCK: usize = 1024;
    let (step_sin, step_cos) = omega.sin_cos();
    for (b, chunk) in out.chunks_mut(BLOCK).enumerate() {
        let start = (b * BLOCK) as f64;
        let (mut s, mut c) = (omega * start + phase).sin_cos();
        for o in chunk.iter_mut() {
            *o += amplitude * c;
            let c_next = c * step_cos - s * step_sin;
            s = s * step_cos + c * step_sin;
            c = c_next;
        }
    }
}

fn render_awgn(out: &mut [f64], std: f64, seed: RngSeed) {
    if std == 0.0 {
        return;
    }
    let mut rng = seed.rng();
    for o in out.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *o += std * e;
    }
}

fn to_buffer<T: Scalar>(v: Vec<f64>, sample_rate: f64) -> SampleBuffer<T> {
    SampleBuffer::from_finite(v.into_iter().map(T::of).collect(), sample_rate)
}

/// Interference-only samples i[0..length).
pub fn generate_interference<T: Scalar>(
    spec: &InterferenceSpec,
    length: usize,
    sample_rate: f64,
    seed: RngSeed,
) -> Result<SampleBuffer<T>, ChannelError> {
    if length == 0 {
        return Err(ChannelError::ZeroLength);
    }
    spec.validate(sample_rate)?;
    let mut out = vec![0.0; length];
    spec.render(&mut out, sample_rate, seed);
    Ok(to_buffer(out, sample_rate))
}

/// Acquisition capture with the transmitter silent: y[n] = i[n] + w[n].
pub fn acquire_noise_only<T: Scalar>(
    spec: &InterferenceSpec,
    noise: &NoiseSpec,
    n_samples: usize,
    sample_rate: f64,
    seed: RngSeed,
) -> Result<SampleBuffer<T>, ChannelError> {
    if n_samples == 0 {
        return Err(ChannelError::ZeroLength);
    }
    spec.validate(sample_rate)?;
    noise.validate()?;
    let mut out = vec![0.0; n_samples];
    spec.render(&mut out, sample_rate, seed.derive(STREAM_INTERFERENCE));
    render_awgn(&mut out, noise.awgn_std, seed.derive(STREAM_NOISE));
    Ok(to_buffer(out, sample_rate))
}

/// Capture with the photodiode covered: receiver noise only.
pub fn acquire_obstructed<T: Scalar>(
    noise: &NoiseSpec,
    n_samples: usize,
    sample_rate: f64,
    seed: RngSeed,
) -> Result<SampleBuffer<T>, ChannelError> {
    if n_samples == 0 {
        return Err(ChannelError::ZeroLength);
    }
    noise.validate()?;
    let mut out = vec![0.0; n_samples];
    render_awgn(&mut out, noise.awgn_std, seed.derive(STREAM_NOISE));
    Ok(to_buffer(out, sample_rate))
}

/// Received data-phase waveform, `x.len() + delay_samples` long.
pub fn transmit_through<T: Scalar>(
    x: &SampleBuffer<T>,
    channel: &ChannelModel,
    spec: &InterferenceSpec,
    noise: &NoiseSpec,
    seed: RngSeed,
) -> Result<SampleBuffer<T>, ChannelError> {
    if x.is_empty() {
        return Err(ChannelError::EmptyInput);
    }
    channel.validate()?;
    spec.validate(x.sample_rate())?;
    noise.validate()?;
    let len = x.len() + channel.delay_samples;
    let mut out = vec![0.0; len];
    let xs = x.as_slice();
    let signal = &mut out[channel.delay_samples..];
    match &channel.impulse_response {
        None => {
            for (o, &v) in signal.iter_mut().zip(xs) {
                *o = channel.gain * v.to_f64_lossy();
            }
        }
        Some(h) => {
            for (n, o) in signal.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, &hk) in h.iter().enumerate().take(n + 1) {
                    acc += hk * xs[n - k].to_f64_lossy();
                }
                *o = channel.gain * acc;
            }
        }
    }
    spec.render(&mut out, x.sample_rate(), seed.derive(STREAM_INTERFERENCE));
    render_awgn(&mut out, noise.awgn_std, seed.derive(STREAM_NOISE));
    Ok(to_buffer(out, x.sample_rate()))
}
