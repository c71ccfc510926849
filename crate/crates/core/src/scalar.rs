//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the simulator, networks and analyses are generic over.
///
/// Implemented for `f32` and `f64`. Everything that persists to disk goes
/// through `f64`, so `to_f64`/`from_f64` are the only conversions that matter.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` constant.
    fn c(value: f64) -> Self {
        Self::from_f64(value).expect("f64 is representable in every Real")
    }

    /// Conversion from a count or index.
    fn from_count(value: usize) -> Self {
        Self::from_usize(value).expect("count is representable in every Real")
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Sum of a slice without relying on `std::iter::Sum` for generic floats.
pub(crate) fn sum<T: Real>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, &v| acc + v)
}

pub(crate) fn mean<T: Real>(values: &[T]) -> T {
    if values.is_empty() {
        return T::nan();
    }
    sum(values) / T::from_count(values.len())
}
