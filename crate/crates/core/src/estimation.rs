//! Interference statistics from noise-only captures.
//!
//! The acquisition capture is y[n] = i[n] + w[n]. White receiver noise only
//! contributes to lag 0 of the autocorrelation, so the interference ACF is
//! recovered by subtracting the noise power measured on an obstructed capture
//! from R_y[0] and keeping every other lag. The one-step predictor
//! `i^[n] = sum_k a_k i[n-k]` then solves the Yule-Walker system
//! `sum_k a_k R[|j-k|] = R[j]`, j = 1..p, by Levinson-Durbin recursion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ppm::SampleBuffer;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("capture is empty")]
    EmptyCapture,
    #[error("max lag {max_lag} needs more than {len} samples")]
    MaxLagTooLarge { max_lag: usize, len: usize },
    #[error("predictor order {order} outside 1..={max_lag}")]
    InvalidOrder { order: usize, max_lag: usize },
    #[error("degenerate autocorrelation: lag-0 value {r0} is not positive")]
    DegenerateAcf { r0: f64 },
    #[error(
        "ill-conditioned Toeplitz system: reflection coefficient {reflection} at stage {stage}"
    )]
    IllConditioned { stage: usize, reflection: f64 },
    #[error("predictor coefficients must be finite and non-empty with residual variance >= 0")]
    InvalidModel,
}

/// Lag-0 loading applied on the single retry after a failed recursion.
pub const REGULARIZATION: f64 = 1e-8;

pub const DEFAULT_ORDER: usize = 8;
pub const MAX_ORDER: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcfEstimator {
    /// Divide-by-N estimator; its Toeplitz matrix is positive semidefinite.
    #[default]
    Biased,
}

/// Autocorrelation values for lags `0..=max_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfEstimate<T> {
    values: Vec<T>,
    n_source_samples: usize,
    estimator: AcfEstimator,
    mean: T,
    clamped: bool,
}

impl<T: Scalar> AcfEstimate<T> {
    /// Wraps a known (e.g. theoretical) autocorrelation sequence.
    pub fn from_values(values: Vec<T>) -> Self {
        let n = values.len();
        Self {
            values,
            n_source_samples: n,
            estimator: AcfEstimator::Biased,
            mean: T::zero(),
            clamped: false,
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn max_lag(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn n_source_samples(&self) -> usize {
        self.n_source_samples
    }

    pub fn estimator(&self) -> AcfEstimator {
        self.estimator
    }

    /// Sample mean removed before estimation (zero for raw estimates).
    pub fn mean(&self) -> T {
        self.mean
    }

    /// True when noise-floor subtraction drove lag 0 below zero.
    pub fn clamped(&self) -> bool {
        self.clamped
    }
}

fn biased_acf<T: Scalar>(xs: &[T], max_lag: usize) -> Vec<T> {
    let n = T::of(xs.len() as f64);
    (0..=max_lag)
        .map(|m| {
            let s: T = xs[m..].iter().zip(xs).map(|(&a, &b)| a * b).sum();
            s / n
        })
        .collect()
}

fn check_lag<T>(x: &SampleBuffer<T>, max_lag: usize) -> Result<(), EstimationError>
where
    T: Scalar,
{
    if x.is_empty() {
        return Err(EstimationError::EmptyCapture);
    }
    if max_lag >= x.len() {
        return Err(EstimationError::MaxLagTooLarge {
            max_lag,
            len: x.len(),
        });
    }
    Ok(())
}

/// Biased ACF of the raw samples, `R[m] = (1/N) sum_{n>=m} x[n] x[n-m]`.
pub fn estimate_acf<T: Scalar>(
    x: &SampleBuffer<T>,
    max_lag: usize,
) -> Result<AcfEstimate<T>, EstimationError> {
    check_lag(x, max_lag)?;
    Ok(AcfEstimate {
        values: biased_acf(x.as_slice(), max_lag),
        n_source_samples: x.len(),
        estimator: AcfEstimator::Biased,
        mean: T::zero(),
        clamped: false,
    })
}

/// Biased ACF after removing the sample mean; the mean is kept on the result
/// so the canceller can strip the same DC level from the data phase.
pub fn estimate_acf_centered<T: Scalar>(
    x: &SampleBuffer<T>,
    max_lag: usize,
) -> Result<AcfEstimate<T>, EstimationError> {
    check_lag(x, max_lag)?;
    let mean = x.mean();
    let centered: Vec<T> = x.as_slice().iter().map(|&v| v - mean).collect();
    Ok(AcfEstimate {
        values: biased_acf(&centered, max_lag),
        n_source_samples: x.len(),
        estimator: AcfEstimator::Biased,
        mean,
        clamped: false,
    })
}

/// Mean square of an obstructed capture (its lag-0 biased ACF).
pub fn estimate_noise_power<T: Scalar>(obstructed: &SampleBuffer<T>) -> Result<T, EstimationError> {
    if obstructed.is_empty() {
        return Err(EstimationError::EmptyCapture);
    }
    Ok(biased_acf(obstructed.as_slice(), 0)[0])
}

/// R_i[0] = max(R_y[0] - noise_power, 0); other lags unchanged.
pub fn interference_acf<T: Scalar>(acquired: &AcfEstimate<T>, noise_power: T) -> AcfEstimate<T> {
    let mut out = acquired.clone();
    if let Some(r0) = out.values.first_mut() {
        let diff = *r0 - noise_power;
        out.clamped = diff < T::zero();
        *r0 = diff.max(T::zero());
    }
    out
}

/// Three standard errors of `R_y[0] - noise_power` when both captures are
/// white noise of power `noise_power`. Interference whose lag-0 power does
/// not clear this margin cannot be told apart from estimation error.
pub fn noise_subtraction_margin<T: Scalar>(
    noise_power: T,
    acquisition_samples: usize,
    obstructed_samples: usize,
) -> T {
    let p = noise_power.to_f64_lossy();
    let se = (2.0 / acquisition_samples.max(1) as f64).sqrt()
        + (2.0 / obstructed_samples.max(1) as f64).sqrt();
    T::of(3.0 * p * se)
}

/// One-step linear predictor of order p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel<T> {
    coefficients: Vec<T>,
    residual_variance: T,
    #[serde(default)]
    regularization: T,
}

impl<T: Scalar> PredictorModel<T> {
    pub fn new(coefficients: Vec<T>, residual_variance: T) -> Result<Self, EstimationError> {
        if coefficients.is_empty()
            || coefficients.iter().any(|a| !a.is_finite())
            || !(residual_variance.is_finite() && residual_variance >= T::zero())
        {
            return Err(EstimationError::InvalidModel);
        }
        Ok(Self {
            coefficients,
            residual_variance,
            regularization: T::zero(),
        })
    }

    /// All-zero predictor: the canceller passes its (centered) input through.
    pub fn zero(order: usize, residual_variance: T) -> Result<Self, EstimationError> {
        Self::new(vec![T::zero(); order], residual_variance)
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// a_1..a_p.
    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn residual_variance(&self) -> T {
        self.residual_variance
    }

    /// Lag-0 loading that was needed to solve the system (zero normally).
    pub fn regularization(&self) -> T {
        self.regularization
    }
}

/// Levinson-Durbin on `r[0..=p]`. Fails with the first stage whose reflection
/// coefficient leaves the open unit disc.
fn levinson<T: Scalar>(r: &[T], order: usize) -> Result<(Vec<T>, T), EstimationError> {
    let mut a: Vec<T> = Vec::with_capacity(order);
    let mut scratch: Vec<T> = Vec::with_capacity(order);
    let mut err = r[0];
    for m in 1..=order {
        let mut acc = r[m];
        for (j, &aj) in a.iter().enumerate() {
            acc -= aj * r[m - 1 - j];
        }
        let k = acc / err;
        if !k.is_finite() || k.abs() >= T::one() {
            return Err(EstimationError::IllConditioned {
                stage: m,
                reflection: k.to_f64_lossy(),
            });
        }
        scratch.clear();
        scratch.extend((0..a.len()).map(|j| a[j] - k * a[a.len() - 1 - j]));
        std::mem::swap(&mut a, &mut scratch);
        a.push(k);
        err *= T::one() - k * k;
    }
    Ok((a, err))
}

/// Solves the order-p Yule-Walker system.
///
/// If the recursion meets a reflection coefficient with magnitude >= 1, lag 0
/// is loaded by [`REGULARIZATION`] x R[0] and the solve is retried once.
pub fn solve_yule_walker<T: Scalar>(
    acf: &AcfEstimate<T>,
    order: usize,
) -> Result<PredictorModel<T>, EstimationError> {
    if order == 0 || order > acf.max_lag() {
        return Err(EstimationError::InvalidOrder {
            order,
            max_lag: acf.max_lag(),
        });
    }
    let r = &acf.values()[..=order];
    if r[0].is_nan() || r[0] <= T::zero() {
        return Err(EstimationError::DegenerateAcf {
            r0: r[0].to_f64_lossy(),
        });
    }
    let (coefficients, residual_variance, regularization) = match levinson(r, order) {
        Ok((a, e)) => (a, e, T::zero()),
        Err(first) => {
            let eps = T::of(REGULARIZATION) * r[0];
            let mut loaded = r.to_vec();
            loaded[0] += eps;
            match levinson(&loaded, order) {
                Ok((a, e)) => {
                    log::warn!("Yule-Walker solve needed lag-0 loading after {first}");
                    (a, e, eps)
                }
                Err(e) => return Err(e),
            }
        }
    };
    Ok(PredictorModel {
        coefficients,
        residual_variance: residual_variance.max(T::zero()),
        regularization,
    })
}
