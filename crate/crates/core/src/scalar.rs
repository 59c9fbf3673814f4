//! Scalar abstraction for rates, prices and MIPS ratings.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type used for every continuous quantity in the model:
/// `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal or sample.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn from_count(n: u64) -> Self {
        <Self as FromPrimitive>::from_u64(n).expect("count is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `floor(x)` as a non-negative count; negative and NaN inputs give 0.
#[inline]
pub(crate) fn floor_count<T: Scalar>(x: T) -> u64 {
    let f = x.floor();
    if f.is_nan() || f <= T::zero() {
        0
    } else {
        f.to_u64().unwrap_or(u64::MAX)
    }
}

/// Round half up to a non-negative count.
#[inline]
pub(crate) fn round_half_up<T: Scalar>(x: T) -> u64 {
    floor_count(x + T::lit(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_helpers() {
        assert_eq!(floor_count(3.5f64), 3);
        assert_eq!(floor_count(-1.0f64), 0);
        assert_eq!(floor_count(f64::NAN), 0);
        assert_eq!(round_half_up(3.25f64), 3);
        assert_eq!(round_half_up(2.5f64), 3);
        assert_eq!(round_half_up(0.49f32), 0);
    }
}
