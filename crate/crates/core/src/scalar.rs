//! Scalar abstraction shared by prediction storage, noise injection and metrics.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point element type: `f32` or `f64`.
///
/// Probabilities may be stored in either width. Vote accumulation never
/// happens in `Self`; rows are converted to exact fixed-point integers first
/// (see [`crate::prediction::FIXED_POINT_SCALE`]).
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static {
    /// Lossy conversion from `f64`, used by generators working in double precision.
    fn from_f64_lossy(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip_representable_values() {
        assert_eq!(f32::from_f64_lossy(0.25).to_f64_lossy(), 0.25);
        assert_eq!(f64::from_f64_lossy(0.1).to_f64_lossy(), 0.1);
    }
}
