//! Built-in operating points.
//!
//! The interference is dominated by a strong tone well above the pulse
//! bandwidth, so a short predictor can remove it without also removing the
//! rectangular pulses. The tone frequency is deliberately not a multiple of
//! the 1 kHz frame rate, otherwise it would add the same offset to every
//! frame and never cause errors.

use super::{Filtering, ScenarioConfig, SweepAxis, SweepSpec};
use crate::channel::{distance_gain, ChannelModel, InterferenceSpec, NoiseSpec, RngSeed};
use crate::estimation::DEFAULT_ORDER;
use crate::ppm::PpmConfig;

pub const HUM_HZ: f64 = 236_731.0;
pub const DEFAULT_FRAMES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 2024;

pub const TABLE4_ACQUISITION: [usize; 9] = [10, 50, 100, 250, 500, 1000, 2000, 3000, 4000];
/// Tone amplitude of the acquisition-length sweep.
pub const TABLE4_HUM_AMPLITUDE: f64 = 100_000.0;
pub const TABLE4_AWGN_STD: f64 = 3.5;

pub const FIGURE34_LUMEN: [f64; 5] = [50.0, 100.0, 150.0, 200.0, 250.0];
pub const FIGURE34_DISTANCES_M: [f64; 3] = [2.0, 4.0, 8.0];
/// Gain at 1 m; the shortest distance then has unit gain.
pub const REFERENCE_GAIN: f64 = 4.0;
pub const FIGURE34_AWGN_STD: f64 = 0.2;
pub const FIGURE34_ACQUISITION: usize = 4000;

fn ppm(order: usize) -> PpmConfig {
    PpmConfig::standard(order).expect("standard orders are valid")
}

/// Tone plus a high-pass AR(1) component plus constant ambient light, per
/// unit of interference amplitude.
pub fn ambient_interference() -> InterferenceSpec {
    InterferenceSpec::Composite {
        components: vec![
            InterferenceSpec::HarmonicHum {
                fundamental_hz: HUM_HZ,
                harmonic_amplitudes: vec![1.0],
                phases: vec![0.3],
            },
            InterferenceSpec::AutoRegressive {
                coefficients: vec![-0.5],
                driving_std: 0.0004,
            },
            InterferenceSpec::DcAmbient { level: 2.0 },
        ],
    }
}

/// 4PPM at 2 m with the ambient mix at 200 lumen.
pub fn default_scenario() -> ScenarioConfig {
    ScenarioConfig {
        ppm: ppm(4),
        channel: ChannelModel::at_distance(REFERENCE_GAIN, 2.0),
        interference: ambient_interference(),
        interference_scale: 200.0,
        noise: NoiseSpec {
            awgn_std: FIGURE34_AWGN_STD,
        },
        acquisition_samples: FIGURE34_ACQUISITION,
        predictor_order: DEFAULT_ORDER,
        n_frames: DEFAULT_FRAMES,
        filtering: Filtering::Both,
        seed: RngSeed::new(DEFAULT_SEED, 0),
    }
}

/// SER against the number of acquisition samples.
pub fn table4_sweep(n_frames: usize, repetitions: usize, seed: u64) -> SweepSpec {
    SweepSpec {
        base: ScenarioConfig {
            ppm: ppm(4),
            channel: ChannelModel::flat(1.0),
            interference: InterferenceSpec::HarmonicHum {
                fundamental_hz: HUM_HZ,
                harmonic_amplitudes: vec![1.0],
                phases: vec![0.3],
            },
            interference_scale: TABLE4_HUM_AMPLITUDE,
            noise: NoiseSpec {
                awgn_std: TABLE4_AWGN_STD,
            },
            acquisition_samples: 4000,
            predictor_order: DEFAULT_ORDER,
            n_frames,
            filtering: Filtering::Both,
            seed: RngSeed::new(seed, 0),
        },
        axis: SweepAxis::AcquisitionSamples,
        values: TABLE4_ACQUISITION.iter().map(|&n| n as f64).collect(),
        repetitions,
        lumen_to_amplitude: 1.0,
        label: None,
    }
}

/// Interference sweeps in lumen, one per distance, for modulation `order`.
/// The axis name records the fixed channel gain of each sweep.
pub fn figure34_sweeps(
    order: usize,
    n_frames: usize,
    repetitions: usize,
    seed: u64,
) -> Vec<SweepSpec> {
    FIGURE34_DISTANCES_M
        .iter()
        .map(|&d| {
            let gain = distance_gain(REFERENCE_GAIN, d);
            let base = ScenarioConfig {
                ppm: ppm(order),
                channel: ChannelModel::flat(gain),
                n_frames,
                seed: RngSeed::new(seed, 0),
                ..default_scenario()
            };
            SweepSpec {
                base,
                axis: SweepAxis::InterferenceAmplitude,
                values: FIGURE34_LUMEN.to_vec(),
                repetitions,
                lumen_to_amplitude: 1.0,
                label: Some(figure34_label(gain)),
            }
        })
        .collect()
}

pub fn figure34_label(gain: f64) -> String {
    format!("interference_amplitude[channel_gain={gain}]")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        default_scenario().validate().unwrap();
        table4_sweep(10, 1, 1).validate().unwrap();
        for order in [4, 8] {
            for s in figure34_sweeps(order, 10, 1, 1) {
                s.validate().unwrap();
            }
        }
    }

    #[test]
    fn distance_labels() {
        let labels: Vec<String> = figure34_sweeps(4, 1, 1, 0)
            .iter()
            .map(|s| s.axis_name())
            .collect();
        assert_eq!(
            labels,
            [
                "interference_amplitude[channel_gain=1]",
                "interference_amplitude[channel_gain=0.25]",
                "interference_amplitude[channel_gain=0.0625]"
            ]
        );
    }
}
