//! M-ary pulse position modulation.
//!
//! A frame of duration `T` is split into `M` slots of `T/M` seconds; the
//! transmitter drives a rectangular pulse of amplitude `A` over exactly one
//! slot. In discrete time the pulse covers the half-open sample range
//! `[l * slot_samples, (l + 1) * slot_samples)`, so the M slots partition
//! the frame and the masks used by the detector are mutually orthogonal.
//!
//! Throughput is `log2(M) / T` bits per second: one frame carries one symbol.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PpmError {
    #[error("modulation order {0} is not a power of two >= 2")]
    InvalidOrder(usize),
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("frame of {frame_samples} samples cannot be split into {order} equal slots")]
    FrameNotDivisible { frame_samples: usize, order: usize },
    #[error("bit sequence of length {len} is not a multiple of {bits_per_symbol}")]
    BitLength { len: usize, bits_per_symbol: usize },
    #[error("bit {index} has value {value}, expected 0 or 1")]
    InvalidBit { index: usize, value: u8 },
    #[error("symbol {symbol} at index {index} is outside [0, {order})")]
    SymbolOutOfRange {
        index: usize,
        symbol: usize,
        order: usize,
    },
    #[error("symbol alphabet size {symbols} does not match modulation order {config}")]
    OrderMismatch { symbols: usize, config: usize },
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
}

fn default_amplitude() -> f64 {
    1.0
}

/// Modulation parameters. Physical quantities are kept in `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpmConfig {
    /// Alphabet size M.
    pub order: usize,
    /// Frame duration T in seconds.
    pub frame_duration: f64,
    /// Samples per second.
    pub sample_rate: f64,
    /// Pulse amplitude A.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

impl PpmConfig {
    pub fn new(
        order: usize,
        frame_duration: f64,
        sample_rate: f64,
        amplitude: f64,
    ) -> Result<Self, PpmError> {
        let cfg = Self {
            order,
            frame_duration,
            sample_rate,
            amplitude,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// T = 1 ms, 1 MS/s, unit amplitude.
    pub fn standard(order: usize) -> Result<Self, PpmError> {
        Self::new(order, 1e-3, 1e6, 1.0)
    }

    pub fn validate(&self) -> Result<(), PpmError> {
        if self.order < 2 || !self.order.is_power_of_two() {
            return Err(PpmError::InvalidOrder(self.order));
        }
        for (name, value) in [
            ("frame_duration", self.frame_duration),
            ("sample_rate", self.sample_rate),
            ("amplitude", self.amplitude),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(PpmError::NonPositive { name, value });
            }
        }
        let frame_samples = self.frame_samples();
        if frame_samples == 0 || !frame_samples.is_multiple_of(self.order) {
            return Err(PpmError::FrameNotDivisible {
                frame_samples,
                order: self.order,
            });
        }
        Ok(())
    }

    pub fn frame_samples(&self) -> usize {
        (self.frame_duration * self.sample_rate).round() as usize
    }

    pub fn slot_samples(&self) -> usize {
        self.frame_samples() / self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    /// Pulse width q = T/M in seconds.
    pub fn pulse_width(&self) -> f64 {
        self.frame_duration / self.order as f64
    }

    /// Bits per second, `log2(M) / T`.
    pub fn throughput_bps(&self) -> f64 {
        self.bits_per_symbol() as f64 / self.frame_duration
    }
}

/// Real-valued samples at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer<T> {
    samples: Vec<T>,
    sample_rate: f64,
}

impl<T: Scalar> SampleBuffer<T> {
    /// Rejects non-finite samples.
    pub fn new(samples: Vec<T>, sample_rate: f64) -> Result<Self, PpmError> {
        if let Some(index) = samples.iter().position(|x| !x.is_finite()) {
            return Err(PpmError::NonFinite { index });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Caller guarantees every sample is finite.
    pub(crate) fn from_finite(samples: Vec<T>, sample_rate: f64) -> Self {
        debug_assert!(samples.iter().all(|x| x.is_finite()));
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Self {
        Self {
            samples: vec![T::zero(); len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn as_slice(&self) -> &[T] {
        &self.samples
    }

    pub fn into_vec(self) -> Vec<T> {
        self.samples
    }

    /// Mean square value.
    pub fn power(&self) -> f64 {
        crate::scalar::mean_square(&self.samples)
    }

    pub fn mean(&self) -> T {
        if self.samples.is_empty() {
            return T::zero();
        }
        let sum: f64 = self.samples.iter().map(|x| x.to_f64_lossy()).sum();
        T::of(sum / self.samples.len() as f64)
    }

    /// Elementwise `a * x + b`.
    pub fn affine(&self, a: T, b: T) -> Self {
        Self::from_finite(
            self.samples.iter().map(|&x| a * x + b).collect(),
            self.sample_rate,
        )
    }

    /// Last `n` samples, or the whole buffer when shorter.
    pub fn tail(&self, n: usize) -> &[T] {
        &self.samples[self.samples.len().saturating_sub(n)..]
    }
}

impl<T> AsRef<[T]> for SampleBuffer<T> {
    fn as_ref(&self) -> &[T] {
        &self.samples
    }
}

/// Slot indices of a transmitted or decided symbol stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolSequence {
    symbols: Vec<usize>,
    order: usize,
}

impl SymbolSequence {
    pub fn new(symbols: Vec<usize>, order: usize) -> Result<Self, PpmError> {
        if order < 2 || !order.is_power_of_two() {
            return Err(PpmError::InvalidOrder(order));
        }
        if let Some((index, &symbol)) = symbols.iter().enumerate().find(|(_, &s)| s >= order) {
            return Err(PpmError::SymbolOutOfRange {
                index,
                symbol,
                order,
            });
        }
        Ok(Self { symbols, order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.symbols
    }
}

/// Groups of `log2(M)` bits, most significant first, in natural binary order.
pub fn bits_to_symbols(bits: &[u8], config: &PpmConfig) -> Result<SymbolSequence, PpmError> {
    config.validate()?;
    let k = config.bits_per_symbol();
    if !bits.len().is_multiple_of(k) {
        return Err(PpmError::BitLength {
            len: bits.len(),
            bits_per_symbol: k,
        });
    }
    if let Some((index, &value)) = bits.iter().enumerate().find(|(_, &b)| b > 1) {
        return Err(PpmError::InvalidBit { index, value });
    }
    let symbols = bits
        .chunks_exact(k)
        .map(|chunk| chunk.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize))
        .collect();
    SymbolSequence::new(symbols, config.order)
}

pub fn symbols_to_bits(symbols: &SymbolSequence) -> Vec<u8> {
    let k = symbols.order().trailing_zeros() as usize;
    let mut bits = Vec::with_capacity(symbols.len() * k);
    for &s in symbols.as_slice() {
        for i in (0..k).rev() {
            bits.push(((s >> i) & 1) as u8);
        }
    }
    bits
}

/// Concatenated frames with a full-slot rectangular pulse per symbol.
pub fn modulate<T: Scalar>(
    symbols: &SymbolSequence,
    config: &PpmConfig,
) -> Result<SampleBuffer<T>, PpmError> {
    config.validate()?;
    if symbols.order() != config.order {
        return Err(PpmError::OrderMismatch {
            symbols: symbols.order(),
            config: config.order,
        });
    }
    let frame = config.frame_samples();
    let slot = config.slot_samples();
    let amplitude = T::of(config.amplitude);
    let mut samples = vec![T::zero(); symbols.len() * frame];
    for (k, &l) in symbols.as_slice().iter().enumerate() {
        let start = k * frame + l * slot;
        samples[start..start + slot].fill(amplitude);
    }
    Ok(SampleBuffer::from_finite(samples, config.sample_rate))
}

/// One 0/1 indicator mask per slot, each `frame_samples` long.
pub fn build_masks<T: Scalar>(config: &PpmConfig) -> Result<Vec<SampleBuffer<T>>, PpmError> {
    config.validate()?;
    let frame = config.frame_samples();
    let slot = config.slot_samples();
    Ok((0..config.order)
        .map(|l| {
            let mut m = vec![T::zero(); frame];
            m[l * slot..(l + 1) * slot].fill(T::one());
            SampleBuffer::from_finite(m, config.sample_rate)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn natural_binary_mapping() {
        let c4 = PpmConfig::standard(4).unwrap();
        let s = bits_to_symbols(&[0, 0, 0, 1, 1, 0, 1, 1], &c4).unwrap();
        assert_eq!(s.as_slice(), &[0, 1, 2, 3]);
        let c8 = PpmConfig::standard(8).unwrap();
        assert_eq!(bits_to_symbols(&[1, 0, 1], &c8).unwrap().as_slice(), &[5]);
        assert_eq!(symbols_to_bits(&s), vec![0, 0, 0, 1, 1, 0, 1, 1]);
        let seven = SymbolSequence::new(vec![7], 8).unwrap();
        assert_eq!(symbols_to_bits(&seven), vec![1, 1, 1]);
    }

    #[test]
    fn rejects_ragged_bits() {
        let c8 = PpmConfig::standard(8).unwrap();
        assert_eq!(
            bits_to_symbols(&[1, 0], &c8),
            Err(PpmError::BitLength {
                len: 2,
                bits_per_symbol: 3
            })
        );
        assert!(matches!(
            bits_to_symbols(&[1, 2, 0], &c8),
            Err(PpmError::InvalidBit { index: 1, value: 2 })
        ));
    }

    #[test]
    fn config_invariants() {
        assert_eq!(PpmConfig::standard(3), Err(PpmError::InvalidOrder(3)));
        assert_eq!(PpmConfig::standard(1), Err(PpmError::InvalidOrder(1)));
        assert!(matches!(
            PpmConfig::new(16, 1e-3, 1e6, 1.0),
            Err(PpmError::FrameNotDivisible { .. })
        ));
        assert!(matches!(
            PpmConfig::new(4, 1e-3, 1e6, 0.0),
            Err(PpmError::NonPositive {
                name: "amplitude",
                ..
            })
        ));
        let c = PpmConfig::standard(4).unwrap();
        assert_eq!(c.bits_per_symbol(), 2);
        assert_eq!(c.throughput_bps(), 2000.0);
    }

    #[test]
    fn operating_point_pulse_widths() {
        let c4 = PpmConfig::standard(4).unwrap();
        assert_eq!(c4.frame_samples(), 1000);
        assert_eq!(c4.slot_samples(), 250);
        assert!((c4.pulse_width() - 0.250e-3).abs() < 1e-15);
        let c8 = PpmConfig::standard(8).unwrap();
        assert_eq!(c8.slot_samples(), 125);
        assert!((c8.pulse_width() - 0.125e-3).abs() < 1e-15);
    }

    #[test]
    fn first_slot_pulse() {
        let c = PpmConfig::standard(4).unwrap();
        let s = SymbolSequence::new(vec![0], 4).unwrap();
        let x = modulate::<f64>(&s, &c).unwrap();
        assert_eq!(x.len(), 1000);
        assert!(x.as_slice()[..250].iter().all(|&v| v == 1.0));
        assert!(x.as_slice()[250..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_energy_counts() {
        for order in [2, 4, 8] {
            let c = PpmConfig::new(order, 1e-3, 1e6, 2.5).unwrap();
            for l in 0..order {
                let s = SymbolSequence::new(vec![l], order).unwrap();
                let x = modulate::<f64>(&s, &c).unwrap();
                // counting oracle: walk the frame, tally nonzero samples
                let mut nonzero = 0;
                let mut sum = 0.0;
                for &v in x.as_slice() {
                    if v != 0.0 {
                        nonzero += 1;
                        assert_eq!(v, 2.5);
                    }
                    sum += v;
                }
                assert_eq!(nonzero, c.slot_samples());
                assert_eq!(sum, 2.5 * c.slot_samples() as f64);
            }
        }
    }

    #[test]
    fn mask_identities() {
        for order in [2, 4, 8] {
            let c = PpmConfig::standard(order).unwrap();
            let masks = build_masks::<f64>(&c).unwrap();
            let slot = c.slot_samples() as f64;
            for i in 0..order {
                for j in 0..order {
                    let expected = if i == j { slot } else { 0.0 };
                    assert_eq!(dot(masks[i].as_slice(), masks[j].as_slice()), expected);
                }
                let s = SymbolSequence::new(vec![i], order).unwrap();
                let x = modulate::<f64>(&s, &c).unwrap();
                assert_eq!(dot(masks[i].as_slice(), x.as_slice()), c.amplitude * slot);
            }
            let mut total = vec![0.0; c.frame_samples()];
            for m in &masks {
                for (t, v) in total.iter_mut().zip(m.as_slice()) {
                    *t += v;
                }
            }
            assert!(total.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn f32_instantiation() {
        let c = PpmConfig::standard(8).unwrap();
        let s = SymbolSequence::new(vec![3, 7], 8).unwrap();
        let x = modulate::<f32>(&s, &c).unwrap();
        assert_eq!(x.as_slice().iter().sum::<f32>(), 250.0);
    }

    #[test]
    fn buffer_rejects_nan() {
        assert_eq!(
            SampleBuffer::new(vec![0.0, f64::NAN], 1.0),
            Err(PpmError::NonFinite { index: 1 })
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn bits_round_trip(order_log in 1u32..=4, mut bits in prop::collection::vec(0u8..=1, 0..256)) {
            let order = 1usize << order_log;
            let c = PpmConfig::new(order, 1e-3, 1.6e6, 1.0).unwrap();
            let k = order_log as usize;
            bits.truncate(bits.len() - bits.len() % k);
            let symbols = bits_to_symbols(&bits, &c).unwrap();
            prop_assert_eq!(symbols_to_bits(&symbols), bits);
        }
    }
}
