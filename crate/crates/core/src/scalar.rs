//! Floating-point abstraction shared by every signal-processing routine.
//!
//! The receive chain is written once against [`Scalar`] and instantiated for
//! `f32` and `f64`. Configuration values (sample rates, durations, channel
//! gains) stay in `f64`; only sample data and the quantities derived from it
//! are generic.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real sample type: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` configuration or RNG value.
    fn of(v: f64) -> Self;

    /// Widening conversion used for accumulation and reporting.
    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Mean square of a slice, accumulated in `f64`.
pub(crate) fn mean_square<T: Scalar>(xs: &[T]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter()
        .map(|&x| {
            let v = x.to_f64_lossy();
            v * v
        })
        .sum::<f64>()
        / xs.len() as f64
}
