//! Scalar abstraction over the floating-point types the toolkit operates on.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::num::ParseFloatError;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar used throughout the crate: `f32` or `f64`.
///
/// All numeric kernels are generic over this trait; the crate root exports
/// `f64` aliases for the common entry points.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + FromStr<Err = ParseFloatError>
    + Serialize
    + DeserializeOwned
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used to feed shared RNG streams and
    /// constants into generic code.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Scalar")
    }
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + FromPrimitive
        + ToPrimitive
        + Sum
        + FromStr<Err = ParseFloatError>
        + Serialize
        + DeserializeOwned
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
