//! Scalar abstraction for the metric side of the crate.
//!
//! Lattice reduction and orbit arithmetic stay exact (see [`crate::rat`]);
//! everything that evaluates a norm, a distance, or a fitted slope is generic
//! over a floating-point scalar so the same code runs at `f32` or `f64`.

use num_traits::{Float, FromPrimitive, NumCast};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + NumCast + Sum + Debug + Display + Send + Sync + 'static
{
    /// Shorthand for lossy conversion out of `f64`.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 -> Real conversion")
    }

    /// Lossy conversion into `f64`.
    fn to_f64_lossy(self) -> f64 {
        NumCast::from(self).expect("Real -> f64 conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}
