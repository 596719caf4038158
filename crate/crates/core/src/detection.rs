//! Mask-correlation detection and symbol error accounting.
//!
//! Each frame is correlated with the M slot masks, `c_l = r . m_l`, and the
//! symbol with the largest metric wins. All masks have the same number of
//! ones, so adding a constant to the frame shifts every metric equally and
//! scaling by a positive factor preserves their order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ppm::{build_masks, PpmConfig, PpmError, SampleBuffer, SymbolSequence};
use crate::scalar::Scalar;

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("no masks supplied")]
    NoMasks,
    #[error("frame has {frame} samples but mask {index} has {mask}")]
    LengthMismatch {
        frame: usize,
        mask: usize,
        index: usize,
    },
    #[error("stream of {len} samples is not a whole number of {frame_samples}-sample frames")]
    PartialFrame { len: usize, frame_samples: usize },
    #[error("decided and true sequences differ ({decided} vs {truth} symbols)")]
    SequenceMismatch { decided: usize, truth: usize },
    #[error("cannot compute an error rate over zero symbols")]
    Empty,
    #[error(transparent)]
    Ppm(#[from] PpmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord<T> {
    pub metrics: Vec<T>,
    pub decided_symbol: usize,
    pub true_symbol: Option<usize>,
}

impl<T> DecisionRecord<T> {
    pub fn is_error(&self) -> Option<bool> {
        self.true_symbol.map(|t| t != self.decided_symbol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerReport {
    pub n_symbols: u64,
    pub n_errors: u64,
    pub ser: f64,
    pub wilson_interval_95: (f64, f64),
}

impl SerReport {
    pub fn from_counts(n_errors: u64, n_symbols: u64) -> Result<Self, DetectionError> {
        if n_symbols == 0 {
            return Err(DetectionError::Empty);
        }
        let ser = n_errors as f64 / n_symbols as f64;
        Ok(Self {
            n_symbols,
            n_errors,
            ser,
            wilson_interval_95: wilson_interval(n_errors, n_symbols, Z_95),
        })
    }
}

/// Wilson score interval for `k` successes in `n` trials, clamped so that
/// `0 <= low <= k/n <= high <= 1`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    assert!(n > 0 && k <= n, "need 0 <= k <= n, n > 0");
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = (centre - half).clamp(0.0, p);
    let high = (centre + half).clamp(p, 1.0);
    (low, high)
}

/// Metrics and argmax decision for one frame; ties go to the smallest index.
pub fn detect_frame<T: Scalar>(
    frame: &[T],
    masks: &[SampleBuffer<T>],
) -> Result<DecisionRecord<T>, DetectionError> {
    if masks.is_empty() {
        return Err(DetectionError::NoMasks);
    }
    let mut metrics = Vec::with_capacity(masks.len());
    for (index, m) in masks.iter().enumerate() {
        if m.len() != frame.len() {
            return Err(DetectionError::LengthMismatch {
                frame: frame.len(),
                mask: m.len(),
                index,
            });
        }
        let c: T = frame.iter().zip(m.as_slice()).map(|(&r, &w)| r * w).sum();
        metrics.push(c);
    }
    let mut decided_symbol = 0;
    for (l, &c) in metrics.iter().enumerate().skip(1) {
        if c > metrics[decided_symbol] {
            decided_symbol = l;
        }
    }
    Ok(DecisionRecord {
        metrics,
        decided_symbol,
        true_symbol: None,
    })
}

/// Splits `z` into frames and decides each one.
pub fn detect_stream<T: Scalar>(
    z: &SampleBuffer<T>,
    config: &PpmConfig,
) -> Result<SymbolSequence, DetectionError> {
    let masks = build_masks::<T>(config)?;
    let frame_samples = config.frame_samples();
    if !z.len().is_multiple_of(frame_samples) {
        return Err(DetectionError::PartialFrame {
            len: z.len(),
            frame_samples,
        });
    }
    let symbols = z
        .as_slice()
        .chunks_exact(frame_samples)
        .map(|frame| detect_frame(frame, &masks).map(|d| d.decided_symbol))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SymbolSequence::new(symbols, config.order)?)
}

pub fn compute_ser(
    decided: &SymbolSequence,
    truth: &SymbolSequence,
) -> Result<SerReport, DetectionError> {
    if decided.len() != truth.len() {
        return Err(DetectionError::SequenceMismatch {
            decided: decided.len(),
            truth: truth.len(),
        });
    }
    let errors = decided
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .filter(|(a, b)| a != b)
        .count();
    SerReport::from_counts(errors as u64, truth.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{transmit_through, ChannelModel, InterferenceSpec, NoiseSpec, RngSeed};
    use crate::ppm::modulate;
    use proptest::prelude::*;
    use rand::Rng;

    fn seq(s: Vec<usize>, m: usize) -> SymbolSequence {
        SymbolSequence::new(s, m).unwrap()
    }

    #[test]
    fn noiseless_self_decoding() {
        for m in [4, 8] {
            let cfg = PpmConfig::standard(m).unwrap();
            let s = seq((0..m).collect(), m);
            let x = modulate::<f64>(&s, &cfg).unwrap();
            assert_eq!(detect_stream(&x, &cfg).unwrap(), s);
        }
    }

    #[test]
    fn zero_frame_breaks_tie_low() {
        let cfg = PpmConfig::standard(4).unwrap();
        let masks = build_masks::<f64>(&cfg).unwrap();
        let d = detect_frame(&vec![0.0; 1000], &masks).unwrap();
        assert_eq!(d.metrics, vec![0.0; 4]);
        assert_eq!(d.decided_symbol, 0);
    }

    #[test]
    fn offset_shifts_metrics_by_slot_mass() {
        let cfg = PpmConfig::standard(8).unwrap();
        let masks = build_masks::<f64>(&cfg).unwrap();
        let x = modulate::<f64>(&seq(vec![5], 8), &cfg).unwrap();
        let base = detect_frame(x.as_slice(), &masks).unwrap();
        let shifted = detect_frame(x.affine(1.0, 0.5).as_slice(), &masks).unwrap();
        for (a, b) in base.metrics.iter().zip(&shifted.metrics) {
            assert_eq!(b - a, 0.5 * 125.0);
        }
        assert_eq!(shifted.decided_symbol, 5);
    }

    #[test]
    fn rejects_bad_shapes() {
        let cfg = PpmConfig::standard(4).unwrap();
        let masks = build_masks::<f64>(&cfg).unwrap();
        assert!(matches!(
            detect_frame(&[0.0; 10], &masks),
            Err(DetectionError::LengthMismatch { .. })
        ));
        assert_eq!(
            detect_frame::<f64>(&[0.0; 10], &[]),
            Err(DetectionError::NoMasks)
        );
        let z = SampleBuffer::<f64>::zeros(1500, 1e6);
        assert!(matches!(
            detect_stream(&z, &cfg),
            Err(DetectionError::PartialFrame { .. })
        ));
        assert_eq!(
            detect_stream(&SampleBuffer::<f64>::zeros(3000, 1e6), &cfg)
                .unwrap()
                .len(),
            3
        );
        assert!(matches!(
            compute_ser(&seq(vec![0], 4), &seq(vec![0, 1], 4)),
            Err(DetectionError::SequenceMismatch { .. })
        ));
        assert_eq!(
            compute_ser(&seq(vec![], 4), &seq(vec![], 4)),
            Err(DetectionError::Empty)
        );
    }

    #[test]
    fn ser_counts() {
        let truth = seq(vec![0; 1000], 4);
        assert_eq!(compute_ser(&truth, &truth).unwrap().ser, 0.0);
        let mut d = vec![0; 1000];
        for i in [3, 70, 500, 999] {
            d[i] = 2;
        }
        let r = compute_ser(&seq(d, 4), &truth).unwrap();
        assert_eq!((r.n_errors, r.n_symbols, r.ser), (4, 1000, 0.004));
        assert_eq!(
            compute_ser(&seq(vec![1; 1000], 4), &truth).unwrap().ser,
            1.0
        );
    }

    #[test]
    fn wilson_matches_reference_values() {
        // statsmodels proportion_confint(method="wilson")
        let cases = [
            (4, 1000, (0.00155658814040843, 0.010239556277262255)),
            (0, 50, (0.0, 0.07134759913335874)),
            (50, 50, (0.9286524008666412, 1.0)),
        ];
        for (k, n, (lo, hi)) in cases {
            let (l, h) = wilson_interval(k, n, Z_95);
            assert!(
                (l - lo).abs() < 1e-12 && (h - hi).abs() < 1e-12,
                "{k}/{n}: {l} {h}"
            );
        }
    }

    fn awgn_ser(cfg: &PpmConfig, sigma: f64, frames: usize, seed: u64) -> f64 {
        let mut rng = RngSeed::new(seed, 0).rng();
        let truth = seq(
            (0..frames)
                .map(|_| rng.random_range(0..cfg.order))
                .collect(),
            cfg.order,
        );
        let x = modulate::<f64>(&truth, cfg).unwrap();
        let r = transmit_through(
            &x,
            &ChannelModel::flat(1.0),
            &InterferenceSpec::WhiteOnly,
            &NoiseSpec::new(sigma).unwrap(),
            RngSeed::new(seed, 1),
        )
        .unwrap();
        compute_ser(&detect_stream(&r, cfg).unwrap(), &truth)
            .unwrap()
            .ser
    }

    #[test]
    fn high_snr_is_error_free() {
        let cfg = PpmConfig::standard(4).unwrap();
        assert_eq!(awgn_ser(&cfg, 1.0, 1000, 3), 0.0);
    }

    #[test]
    fn ser_falls_with_snr() {
        let cfg = PpmConfig::standard(4).unwrap();
        let medians: Vec<f64> = [12.0, 10.0, 8.0, 6.0, 4.0]
            .iter()
            .map(|&sigma| {
                let mut v: Vec<f64> = (0..5).map(|s| awgn_ser(&cfg, sigma, 1000, s)).collect();
                v.sort_by(f64::total_cmp);
                v[2]
            })
            .collect();
        assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
        assert!(medians[0] > medians[4]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn offset_and_scale_invariant(
            frame in prop::collection::vec(-4.0f64..4.0, 1000),
            offset in -100.0f64..100.0,
            scale in 0.01f64..100.0,
        ) {
            let cfg = PpmConfig::standard(4).unwrap();
            let masks = build_masks::<f64>(&cfg).unwrap();
            let d = detect_frame(&frame, &masks).unwrap().decided_symbol;
            let shifted: Vec<f64> = frame.iter().map(|x| x + offset).collect();
            let scaled: Vec<f64> = frame.iter().map(|x| x * scale).collect();
            prop_assert_eq!(detect_frame(&shifted, &masks).unwrap().decided_symbol, d);
            prop_assert_eq!(detect_frame(&scaled, &masks).unwrap().decided_symbol, d);
        }
    }
}
