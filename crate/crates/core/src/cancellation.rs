//! Predict-and-subtract interference canceller.
//!
//! For each received sample the canceller removes the acquisition DC level,
//! predicts the current value from the previous p centered inputs and
//! outputs the prediction error. The history always holds observed inputs,
//! never outputs, so the structure is the FIR prediction-error filter
//! `1 - sum_k a_k z^-k`.

use thiserror::Error;

use crate::estimation::PredictorModel;
use crate::ppm::SampleBuffer;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CancellationError {
    #[error("warm-up buffer has {len} samples, predictor needs {order}")]
    ShortWarmup { len: usize, order: usize },
    #[error("buffers differ in length ({before} vs {after})")]
    LengthMismatch { before: usize, after: usize },
    #[error("reference buffer has zero power; gain is undefined")]
    ZeroPower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CancellerState<T> {
    model: PredictorModel<T>,
    /// Most recent first.
    history: Vec<T>,
    dc_level: T,
}

/// Seeds the history with the last p warm-up samples, DC removed.
pub fn prime<T: Scalar>(
    model: PredictorModel<T>,
    dc_level: T,
    warmup: &SampleBuffer<T>,
) -> Result<CancellerState<T>, CancellationError> {
    let order = model.order();
    if warmup.len() < order {
        return Err(CancellationError::ShortWarmup {
            len: warmup.len(),
            order,
        });
    }
    let history = warmup
        .tail(order)
        .iter()
        .rev()
        .map(|&v| v - dc_level)
        .collect();
    Ok(CancellerState {
        model,
        history,
        dc_level,
    })
}

impl<T: Scalar> CancellerState<T> {
    pub fn model(&self) -> &PredictorModel<T> {
        &self.model
    }

    pub fn history(&self) -> &[T] {
        &self.history
    }

    pub fn dc_level(&self) -> T {
        self.dc_level
    }

    /// z[n] = u[n] - sum_k a_k u[n-k], with u = r - dc_level.
    pub fn cancel(&mut self, r: &SampleBuffer<T>) -> SampleBuffer<T> {
        let p = self.history.len();
        let a = self.model.coefficients();
        // oldest history first, then the centered input
        let mut ext: Vec<T> = Vec::with_capacity(p + r.len());
        ext.extend(self.history.iter().rev().copied());
        ext.extend(r.as_slice().iter().map(|&v| v - self.dc_level));
        let out: Vec<T> = ext
            .windows(p + 1)
            .map(|w| {
                let mut pred = T::zero();
                for (k, &ak) in a.iter().enumerate() {
                    pred += ak * w[p - 1 - k];
                }
                w[p] - pred
            })
            .collect();
        self.history.clear();
        self.history.extend(ext.iter().rev().take(p).copied());
        SampleBuffer::from_finite(out, r.sample_rate())
    }
}

pub fn cancel<T: Scalar>(state: &mut CancellerState<T>, r: &SampleBuffer<T>) -> SampleBuffer<T> {
    state.cancel(r)
}

/// 10 log10(P_before / P_after) in dB.
pub fn prediction_gain<T: Scalar>(
    before: &SampleBuffer<T>,
    after: &SampleBuffer<T>,
) -> Result<f64, CancellationError> {
    if before.len() != after.len() {
        return Err(CancellationError::LengthMismatch {
            before: before.len(),
            after: after.len(),
        });
    }
    let pb = before.power();
    if pb == 0.0 {
        return Err(CancellationError::ZeroPower);
    }
    Ok(10.0 * (pb / after.power()).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_interference, InterferenceSpec, RngSeed};
    use crate::estimation::{solve_yule_walker, AcfEstimate};
    use proptest::prelude::*;

    const FS: f64 = 1e6;

    fn buf(v: Vec<f64>) -> SampleBuffer<f64> {
        SampleBuffer::new(v, FS).unwrap()
    }

    fn model(a: Vec<f64>) -> PredictorModel<f64> {
        PredictorModel::new(a, 1.0).unwrap()
    }

    #[test]
    fn priming_takes_reversed_tail() {
        let s = prime(model(vec![0.1, 0.2]), 0.0, &buf(vec![9.0, 3.0, 4.0])).unwrap();
        assert_eq!(s.history(), &[4.0, 3.0]);
        let s = prime(model(vec![0.1, 0.2]), 1.0, &buf(vec![3.0, 4.0])).unwrap();
        assert_eq!(s.history(), &[3.0, 2.0]);
        assert_eq!(
            prime(model(vec![0.1, 0.2, 0.3]), 0.0, &buf(vec![1.0, 2.0])),
            Err(CancellationError::ShortWarmup { len: 2, order: 3 })
        );
    }

    #[test]
    fn zero_history_zero_prediction() {
        let mut s = prime(model(vec![0.5, 0.25]), 0.0, &buf(vec![0.0, 0.0])).unwrap();
        let z = s.cancel(&buf(vec![1.0, 0.0, 0.0]));
        assert_eq!(z.as_slice(), &[1.0, -0.5, -0.25]);
        assert_eq!(s.history(), &[0.0, 0.0]);
    }

    #[test]
    fn no_op_predictor() {
        let input = buf(vec![1.0, -2.0, 3.5, 0.25]);
        let mut s = prime(
            PredictorModel::zero(3, 1.0).unwrap(),
            0.0,
            &buf(vec![7.0; 3]),
        )
        .unwrap();
        assert_eq!(s.cancel(&input), input);
    }

    #[test]
    fn chunked_equals_whole() {
        let x = generate_interference::<f64>(
            &InterferenceSpec::AutoRegressive {
                coefficients: vec![0.6, -0.2],
                driving_std: 1.0,
            },
            500,
            FS,
            RngSeed::new(1, 1),
        )
        .unwrap();
        let m = model(vec![0.6, -0.2]);
        let warm = buf(vec![0.3, -0.1]);
        let mut whole = prime(m.clone(), 0.2, &warm).unwrap();
        let z_whole = whole.cancel(&x);
        let mut parts = prime(m, 0.2, &warm).unwrap();
        let mut z_parts = parts.cancel(&buf(x.as_slice()[..137].to_vec())).into_vec();
        z_parts.extend(parts.cancel(&buf(x.as_slice()[137..].to_vec())).into_vec());
        assert_eq!(z_whole.as_slice(), &z_parts[..]);
        assert_eq!(whole.history(), parts.history());
    }

    #[test]
    fn sinusoid_is_perfectly_predicted() {
        let f = 12_345.0;
        let w = std::f64::consts::TAU * f / FS;
        let s: Vec<f64> = (0..20_000)
            .map(|n| 2.0 * (w * n as f64 + 0.7).sin())
            .collect();
        let (warm, data) = s.split_at(2);
        let mut st = prime(model(vec![2.0 * w.cos(), -1.0]), 0.0, &buf(warm.to_vec())).unwrap();
        let data = buf(data.to_vec());
        let z = st.cancel(&data);
        assert!(z.power() < 1e-6 * data.power());
    }

    #[test]
    fn ar1_prediction_error_power() {
        let a = 0.95;
        let spec = InterferenceSpec::AutoRegressive {
            coefficients: vec![a],
            driving_std: 1.0,
        };
        let x = generate_interference::<f64>(&spec, 100_001, FS, RngSeed::new(9, 9)).unwrap();
        let exact = AcfEstimate::from_values(vec![1.0, a]);
        let m = solve_yule_walker(&exact, 1).unwrap();
        let (warm, data) = x.as_slice().split_at(1);
        let mut st = prime(m, 0.0, &buf(warm.to_vec())).unwrap();
        let data = buf(data.to_vec());
        let z = st.cancel(&data);
        let ratio = z.power() / data.power();
        assert!((ratio / (1.0 - a * a) - 1.0).abs() < 0.1, "ratio {ratio}");
        let gain = prediction_gain(&data, &z).unwrap();
        assert!((gain - 10.0 * (1.0 / (1.0 - a * a)).log10()).abs() < 0.5);
    }

    #[test]
    fn gain_identities() {
        let b = buf(vec![1.0, -3.0, 2.0]);
        assert_eq!(prediction_gain(&b, &b).unwrap(), 0.0);
        let scaled = b.affine(1.0 / 10f64.sqrt(), 0.0);
        assert!((prediction_gain(&b, &scaled).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(
            prediction_gain(&buf(vec![0.0; 3]), &b),
            Err(CancellationError::ZeroPower)
        );
        assert!(matches!(
            prediction_gain(&b, &buf(vec![1.0])),
            Err(CancellationError::LengthMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn linear_in_input(
            coeffs in prop::collection::vec(-0.9f64..0.9, 1..6),
            input in prop::collection::vec(-10.0f64..10.0, 1..200),
            alpha in -5.0f64..5.0,
        ) {
            let p = coeffs.len();
            let m = model(coeffs);
            let warm = buf(vec![0.0; p]);
            let r = buf(input);
            let mut s1 = prime(m.clone(), 0.0, &warm).unwrap();
            let mut s2 = prime(m, 0.0, &warm).unwrap();
            let z1 = s1.cancel(&r.affine(alpha, 0.0));
            let z2 = s2.cancel(&r);
            for (x, y) in z1.as_slice().iter().zip(z2.as_slice()) {
                prop_assert!((x - alpha * y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }
}
