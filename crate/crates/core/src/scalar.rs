//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra as na;
use num_traits as nt;

/// Floating point type usable by the synthesis, filtering and simulation code.
///
/// Implemented for `f32` and `f64`. Tolerances stated in the docs assume `f64`;
/// `f32` instances work but the solver and quantile accuracy targets degrade
/// accordingly.
pub trait Real:
    na::RealField + Copy + nt::FromPrimitive + nt::ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Machine epsilon of the type.
    const EPS: Self;

    /// Lossy conversion to `f64`, used for RNG plumbing and serialisation.
    fn to_f64_lossy(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    const EPS: Self = f32::EPSILON;
}

impl Real for f64 {
    const EPS: Self = f64::EPSILON;
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    <T as nt::FromPrimitive>::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    <T as nt::FromPrimitive>::from_usize(n).expect("count representable in scalar type")
}
