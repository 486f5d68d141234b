//! Scalar abstraction shared by the survival statistics and the risk models.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type the numerical core is generic over.
///
/// Implemented for `f32` and `f64`. Everything that crosses a file or report
/// boundary is converted to `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
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
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self;

    fn from_f32_value(x: f32) -> Self;

    fn to_f64_value(self) -> f64;

    fn from_count(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Scalar for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn from_f32_value(x: f32) -> Self {
        x
    }
    #[inline]
    fn to_f64_value(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn from_f32_value(x: f32) -> Self {
        x as f64
    }
    #[inline]
    fn to_f64_value(self) -> f64 {
        self
    }
}
