//! Monte Carlo experiments over the full receive chain.
//!
//! One scenario run is: obstructed capture for the noise floor, noise-only
//! acquisition for the interference statistics, predictor fit, random symbol
//! transmission through the channel, optional cancellation, detection and
//! error counting. Filtered and unfiltered decisions are taken from the same
//! received waveform so the pair differs only in the canceller.

mod presets;
mod report;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cancellation::{prediction_gain, prime, CancellationError};
use crate::channel::{
    acquire_noise_only, acquire_obstructed, transmit_through, ChannelError, ChannelModel,
    InterferenceSpec, NoiseSpec, RngSeed,
};
use crate::detection::{compute_ser, detect_stream, DetectionError, SerReport};
use crate::estimation::{
    estimate_acf_centered, estimate_noise_power, interference_acf, noise_subtraction_margin,
    solve_yule_walker, EstimationError, PredictorModel, MAX_ORDER,
};
use crate::ppm::{modulate, PpmConfig, PpmError, SampleBuffer, SymbolSequence};

pub use presets::*;
pub use report::*;

// Stream purposes, derived from the repetition seed.
const STREAM_OBSTRUCTED: u64 = 1;
const STREAM_ACQUISITION: u64 = 2;
const STREAM_SYMBOLS: u64 = 3;
const STREAM_TRANSMISSION: u64 = 4;
const STREAM_EPOCH: u64 = 5;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ppm(#[from] PpmError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("estimation failed: {0}")]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Cancellation(#[from] CancellationError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
}

impl HarnessError {
    /// True for errors raised by the configuration checks rather than a run.
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_) | Self::Ppm(_) | Self::Channel(_))
    }
}

/// Which receiver paths to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filtering {
    On,
    Off,
    #[default]
    Both,
}

impl Filtering {
    fn wants_off(self) -> bool {
        matches!(self, Self::Off | Self::Both)
    }

    fn wants_on(self) -> bool {
        matches!(self, Self::On | Self::Both)
    }
}

impl FromStr for Filtering {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "on" => Ok(Self::On),
            "off" => Ok(Self::Off),
            "both" => Ok(Self::Both),
            _ => Err(HarnessError::Config(format!(
                "filtering must be on, off or both, got {s:?}"
            ))),
        }
    }
}

fn default_scale() -> f64 {
    1.0
}

/// A single operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub ppm: PpmConfig,
    pub channel: ChannelModel,
    pub interference: InterferenceSpec,
    /// Multiplies every interference component.
    #[serde(default = "default_scale")]
    pub interference_scale: f64,
    pub noise: NoiseSpec,
    pub acquisition_samples: usize,
    pub predictor_order: usize,
    pub n_frames: usize,
    #[serde(default)]
    pub filtering: Filtering,
    #[serde(default)]
    pub seed: RngSeed,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        presets::default_scenario()
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.ppm.validate()?;
        self.channel.validate()?;
        self.noise.validate()?;
        self.interference.validate(self.ppm.sample_rate)?;
        if !(self.interference_scale.is_finite() && self.interference_scale >= 0.0) {
            return Err(HarnessError::Config(format!(
                "interference_scale must be finite and >= 0, got {}",
                self.interference_scale
            )));
        }
        if self.predictor_order == 0 || self.predictor_order > MAX_ORDER {
            return Err(HarnessError::Config(format!(
                "predictor_order must be in 1..={MAX_ORDER}, got {}",
                self.predictor_order
            )));
        }
        if self.acquisition_samples < self.predictor_order + 1 {
            return Err(HarnessError::Config(format!(
                "acquisition_samples ({}) must be at least predictor_order + 1 ({})",
                self.acquisition_samples,
                self.predictor_order + 1
            )));
        }
        if self.n_frames == 0 {
            return Err(HarnessError::Config("n_frames must be at least 1".into()));
        }
        Ok(())
    }

    /// Interference as seen by the receiver, scale applied.
    pub fn effective_interference(&self) -> InterferenceSpec {
        self.interference.scaled(self.interference_scale)
    }
}

/// Receiver path a result row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowFiltering {
    Off,
    On,
    /// Filtering was requested but the interference estimate was unusable,
    /// so the unfiltered decisions are reported.
    Bypassed,
}

impl fmt::Display for RowFiltering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Off => "off",
            Self::On => "on",
            Self::Bypassed => "bypassed",
        })
    }
}

/// Coefficients and fit quality of the predictor used at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSummary {
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub residual_variance: f64,
    pub regularization: f64,
    pub noise_power: f64,
    pub dc_level: f64,
    pub clamped: bool,
}

/// Outcome of one receiver path at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub filtering: RowFiltering,
    pub ser: SerReport,
    pub prediction_gain_db: Option<f64>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub paths: Vec<PathResult>,
    pub predictor: Option<PredictorSummary>,
    /// SHA-256 over the transmitted symbols and the received waveform.
    pub realization_digest: String,
}

fn digest(symbols: &SymbolSequence, r: &SampleBuffer<f64>) -> String {
    let mut h = Sha256::new();
    for &s in symbols.as_slice() {
        h.update((s as u64).to_le_bytes());
    }
    let mut bytes = Vec::with_capacity(8 * 4096);
    for chunk in r.as_slice().chunks(4096) {
        bytes.clear();
        for v in chunk {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        h.update(&bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

struct Estimate {
    model: Option<PredictorModel<f64>>,
    summary: Option<PredictorSummary>,
    acquisition: SampleBuffer<f64>,
    dc_level: f64,
    warning: Option<String>,
}

fn estimate(
    cfg: &ScenarioConfig,
    interference: &InterferenceSpec,
) -> Result<Estimate, HarnessError> {
    let fs = cfg.ppm.sample_rate;
    let n = cfg.acquisition_samples;
    let p = cfg.predictor_order;
    let obstructed =
        acquire_obstructed::<f64>(&cfg.noise, n, fs, cfg.seed.derive(STREAM_OBSTRUCTED))?;
    let noise_power = estimate_noise_power(&obstructed)?;
    // the capture ends where the data phase starts
    let acquisition = acquire_noise_only::<f64>(
        &interference.time_shifted(-(n as i64), fs),
        &cfg.noise,
        n,
        fs,
        cfg.seed.derive(STREAM_ACQUISITION),
    )?;
    let acf = estimate_acf_centered(&acquisition, p)?;
    let ri = interference_acf(&acf, noise_power);
    let dc_level = acf.mean();
    let margin = noise_subtraction_margin(noise_power, n, n);
    let r0 = ri.values()[0];
    let solved = if r0 <= margin {
        Err(EstimationError::DegenerateAcf { r0 })
    } else {
        solve_yule_walker(&ri, p)
    };
    match solved {
        Ok(model) => {
            let summary = PredictorSummary {
                order: model.order(),
                coefficients: model.coefficients().to_vec(),
                residual_variance: model.residual_variance(),
                regularization: model.regularization(),
                noise_power,
                dc_level,
                clamped: ri.clamped(),
            };
            Ok(Estimate {
                model: Some(model),
                summary: Some(summary),
                acquisition,
                dc_level,
                warning: None,
            })
        }
        Err(EstimationError::DegenerateAcf { r0 }) => {
            let warning = format!(
                "interference lag-0 power {r0} does not clear the noise-floor margin {margin}; filtering bypassed"
            );
            log::warn!("{warning}");
            Ok(Estimate {
                model: None,
                summary: None,
                acquisition,
                dc_level,
                warning: Some(warning),
            })
        }
        Err(e) => Err(e.into()),
    }
}

/// Runs one operating point, returning one path per requested filtering mode.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, HarnessError> {
    cfg.validate()?;
    // the session starts at a random instant within one second, so periodic
    // interference is met at a random phase
    let fs = cfg.ppm.sample_rate;
    let epoch = cfg
        .seed
        .derive(STREAM_EPOCH)
        .rng()
        .random_range(0..fs.max(1.0) as i64);
    let interference = cfg.effective_interference().time_shifted(epoch, fs);
    let est = estimate(cfg, &interference)?;

    let mut rng = cfg.seed.derive(STREAM_SYMBOLS).rng();
    let truth = SymbolSequence::new(
        (0..cfg.n_frames)
            .map(|_| rng.random_range(0..cfg.ppm.order))
            .collect(),
        cfg.ppm.order,
    )?;
    let x = modulate::<f64>(&truth, &cfg.ppm)?;
    let r = transmit_through(
        &x,
        &cfg.channel,
        &interference,
        &cfg.noise,
        cfg.seed.derive(STREAM_TRANSMISSION),
    )?;
    let realization_digest = digest(&truth, &r);
    let delay = cfg.channel.delay_samples;
    let aligned = |buf: &SampleBuffer<f64>| {
        SampleBuffer::new(
            buf.as_slice()[delay..delay + x.len()].to_vec(),
            buf.sample_rate(),
        )
    };

    let mut paths = Vec::new();
    let need_off = cfg.filtering.wants_off() || est.model.is_none();
    let off_ser = if need_off {
        Some(compute_ser(
            &detect_stream(&aligned(&r)?, &cfg.ppm)?,
            &truth,
        )?)
    } else {
        None
    };
    if cfg.filtering.wants_off() {
        paths.push(PathResult {
            filtering: RowFiltering::Off,
            ser: off_ser.expect("off path computed"),
            prediction_gain_db: None,
            warning: None,
        });
    }
    if cfg.filtering.wants_on() {
        match est.model {
            Some(model) => {
                let mut state = prime(model, est.dc_level, &est.acquisition)?;
                let z = state.cancel(&r);
                let u = r.affine(1.0, -est.dc_level);
                let gain = prediction_gain(&u, &z)?;
                let ser = compute_ser(&detect_stream(&aligned(&z)?, &cfg.ppm)?, &truth)?;
                paths.push(PathResult {
                    filtering: RowFiltering::On,
                    ser,
                    prediction_gain_db: Some(gain),
                    warning: None,
                });
            }
            None => paths.push(PathResult {
                filtering: RowFiltering::Bypassed,
                ser: off_ser.expect("off path computed"),
                prediction_gain_db: None,
                warning: est.warning.clone(),
            }),
        }
    }
    Ok(ScenarioOutcome {
        paths,
        predictor: est.summary,
        realization_digest,
    })
}

/// Parameter varied across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "interference_amplitude")]
    InterferenceAmplitude,
    #[serde(rename = "channel_gain")]
    ChannelGain,
    #[serde(rename = "acquisition_samples")]
    AcquisitionSamples,
    #[serde(rename = "order_M")]
    OrderM,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::InterferenceAmplitude => "interference_amplitude",
            Self::ChannelGain => "channel_gain",
            Self::AcquisitionSamples => "acquisition_samples",
            Self::OrderM => "order_M",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "interference_amplitude" => Ok(Self::InterferenceAmplitude),
            "channel_gain" => Ok(Self::ChannelGain),
            "acquisition_samples" => Ok(Self::AcquisitionSamples),
            "order_M" => Ok(Self::OrderM),
            _ => Err(HarnessError::Config(format!("unknown sweep axis {s:?}"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn one() -> usize {
    1
}

/// A one-dimensional sweep around a base scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Interference scale per unit of `interference_amplitude` (e.g. per lumen).
    #[serde(default = "default_scale")]
    pub lumen_to_amplitude: f64,
    /// Overrides the axis name in the report, e.g. to record a fixed coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn as_count(axis: SweepAxis, v: f64) -> Result<usize, HarnessError> {
    if v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(HarnessError::Config(format!(
            "{axis} needs positive integer values, got {v}"
        )))
    }
}

impl SweepSpec {
    pub fn single(base: ScenarioConfig) -> Self {
        let n = base.acquisition_samples as f64;
        Self {
            base,
            axis: SweepAxis::AcquisitionSamples,
            values: vec![n],
            repetitions: 1,
            lumen_to_amplitude: 1.0,
            label: None,
        }
    }

    pub fn axis_name(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.axis.name().to_string())
    }

    /// Base scenario with the axis set to `value`.
    pub fn point(&self, value: f64) -> Result<ScenarioConfig, HarnessError> {
        let mut cfg = self.base.clone();
        match self.axis {
            SweepAxis::InterferenceAmplitude => {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(HarnessError::Config(format!(
                        "interference_amplitude must be >= 0, got {value}"
                    )));
                }
                cfg.interference_scale = value * self.lumen_to_amplitude;
            }
            SweepAxis::ChannelGain => cfg.channel.gain = value,
            SweepAxis::AcquisitionSamples => cfg.acquisition_samples = as_count(self.axis, value)?,
            SweepAxis::OrderM => cfg.ppm.order = as_count(self.axis, value)?,
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.values.is_empty() {
            return Err(HarnessError::Config("sweep has no values".into()));
        }
        if self.repetitions == 0 {
            return Err(HarnessError::Config(
                "repetitions must be at least 1".into(),
            ));
        }
        if !(self.lumen_to_amplitude.is_finite() && self.lumen_to_amplitude >= 0.0) {
            return Err(HarnessError::Config(
                "lumen_to_amplitude must be finite and >= 0".into(),
            ));
        }
        for &v in &self.values {
            self.point(v)?;
        }
        Ok(())
    }
}

/// Seed for repetition `rep`; independent of the axis value so every point
/// of a sweep sees the same noise realizations.
pub fn repetition_seed(base: RngSeed, rep: usize) -> RngSeed {
    base.reseed(rep as u64)
}

fn point_rows(sweep: &SweepSpec, value: f64, rep: usize) -> Vec<ResultRow> {
    let mut cfg = sweep.point(value).expect("validated sweep point");
    cfg.seed = repetition_seed(sweep.base.seed, rep);
    let row = |filtering| ResultRow {
        axis_name: sweep.axis_name(),
        axis_value: value,
        filtering,
        order_m: cfg.ppm.order,
        n_frames: cfg.n_frames,
        n_errors: None,
        ser: None,
        ser_ci_low: None,
        ser_ci_high: None,
        prediction_gain_db: None,
        predictor_order: None,
        residual_variance: None,
        seed: cfg.seed.seed,
        repetition: rep,
        realization_digest: None,
        predictor: None,
        warning: None,
        failure: None,
    };
    match run_scenario(&cfg) {
        Ok(out) => out
            .paths
            .into_iter()
            .map(|p| {
                let mut r = row(p.filtering);
                r.n_errors = Some(p.ser.n_errors);
                r.ser = Some(p.ser.ser);
                r.ser_ci_low = Some(p.ser.wilson_interval_95.0);
                r.ser_ci_high = Some(p.ser.wilson_interval_95.1);
                r.prediction_gain_db = p.prediction_gain_db;
                if p.filtering != RowFiltering::Bypassed {
                    r.predictor_order = out.predictor.as_ref().map(|s| s.order);
                    r.residual_variance = out.predictor.as_ref().map(|s| s.residual_variance);
                    r.predictor = out.predictor.clone();
                }
                r.realization_digest = Some(out.realization_digest.clone());
                r.warning = p.warning;
                r
            })
            .collect(),
        Err(e) => {
            log::error!("{} = {value}, repetition {rep}: {e}", sweep.axis_name());
            let mut modes = Vec::new();
            if cfg.filtering.wants_off() {
                modes.push(RowFiltering::Off);
            }
            if cfg.filtering.wants_on() {
                modes.push(RowFiltering::On);
            }
            modes
                .into_iter()
                .map(|m| {
                    let mut r = row(m);
                    r.failure = Some(e.to_string());
                    r
                })
                .collect()
        }
    }
}

/// Runs several sweeps into one report; rows keep sweep order, then sort by
/// axis value, repetition and filtering within each sweep.
pub fn run_sweeps(sweeps: &[SweepSpec]) -> Result<ExperimentReport, HarnessError> {
    for s in sweeps {
        s.validate()?;
    }
    let mut rows = Vec::new();
    for s in sweeps {
        let jobs: Vec<(usize, usize)> = (0..s.values.len())
            .flat_map(|i| (0..s.repetitions).map(move |rep| (i, rep)))
            .collect();
        let mut part: Vec<ResultRow> = jobs
            .par_iter()
            .flat_map_iter(|&(i, rep)| point_rows(s, s.values[i], rep))
            .collect();
        part.sort_by(|a, b| {
            a.axis_value
                .total_cmp(&b.axis_value)
                .then(a.repetition.cmp(&b.repetition))
                .then(a.filtering.cmp(&b.filtering))
        });
        rows.extend(part);
    }
    Ok(ExperimentReport {
        metadata: ReportMetadata::for_sweeps(sweeps),
        rows,
    })
}

pub fn run_sweep(sweep: &SweepSpec) -> Result<ExperimentReport, HarnessError> {
    run_sweeps(std::slice::from_ref(sweep))
}
