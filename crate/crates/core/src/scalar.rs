//! Scalar abstraction: the numeric kernels are generic over `Real`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating-point scalar usable by every kernel in this crate: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + NumCast
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lift an `f64` constant into this scalar type.
    #[inline]
    fn c(value: f64) -> Self {
        Self::from_f64(value).expect("constant representable in scalar type")
    }

    /// Lossy view as `f64`, for reports and error messages.
    #[inline]
    fn as_f64(self) -> f64 {
        NumCast::from(self).expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
