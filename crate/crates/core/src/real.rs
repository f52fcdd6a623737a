use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Scalar type the whole library is generic over: `f64` for production,
/// `f32` works for tame inputs (narrow exponent range).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, for algorithm constants.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant not representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}

/// Relative gap |a - b| / max(|a|, |b|, floor). Zero when both are zero.
pub fn rel_gap<F: Real>(a: F, b: F) -> F {
    let denom = a.abs().max(b.abs());
    if denom == F::zero() {
        return F::zero();
    }
    (a - b).abs() / denom
}
