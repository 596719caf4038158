//! Baseband simulation of an M-PPM optical link with ambient-light
//! interference cancellation.
//!
//! The receive chain has two phases. While the transmitter is silent the
//! receiver records the interference, estimates its autocorrelation and fits
//! a one-step linear predictor. During data transmission the predicted
//! interference is subtracted from every sample before mask-correlation
//! detection.
//!
//! Signal-processing code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the Monte Carlo harness uses.

pub mod cancellation;
pub mod channel;
pub mod detection;
pub mod estimation;
pub mod harness;
pub mod ppm;
pub mod scalar;

pub use cancellation::{prediction_gain, prime, CancellationError, CancellerState};
pub use channel::{
    acquire_noise_only, acquire_obstructed, distance_gain, generate_interference, transmit_through,
    ChannelError, ChannelModel, InterferenceSpec, NoiseSpec, RngSeed,
};
pub use detection::{
    compute_ser, detect_frame, detect_stream, wilson_interval, DecisionRecord, DetectionError,
    SerReport,
};
pub use estimation::{
    estimate_acf, estimate_acf_centered, estimate_noise_power, interference_acf, solve_yule_walker,
    AcfEstimate, AcfEstimator, EstimationError, PredictorModel,
};
pub use harness::{
    emit_report, run_scenario, run_sweep, run_sweeps, ExperimentReport, Filtering, HarnessError,
    ReportFormat, ResultRow, RowFiltering, ScenarioConfig, SweepAxis, SweepSpec,
};
pub use ppm::{
    bits_to_symbols, build_masks, modulate, symbols_to_bits, PpmConfig, PpmError, SampleBuffer,
    SymbolSequence,
};
pub use scalar::Scalar;

pub type Signal = SampleBuffer<f64>;
pub type Signal32 = SampleBuffer<f32>;
pub type Acf = AcfEstimate<f64>;
pub type Predictor = PredictorModel<f64>;
pub type Canceller = CancellerState<f64>;
pub type Decision = DecisionRecord<f64>;
