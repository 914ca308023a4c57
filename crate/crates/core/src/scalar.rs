//! Scalar abstraction shared by the numeric modules.
//!
//! Everything that only needs floating-point arithmetic is written against
//! [`Real`], which is implemented for `f32` and `f64`. The extra special
//! functions (`erfc`, `ln_gamma`) are not part of `num_traits::Float`, so they
//! live here and dispatch to `libm`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the generic numeric code.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Natural log of the absolute value of the gamma function.
    fn log_gamma(self) -> Self;

    /// Lossless widening to `f64`.
    fn to_f64_exact(self) -> f64;

    /// Nearest representable value (rounding for `f32`).
    fn from_f64_lossy(x: f64) -> Self;

    /// Convert a small literal. Panics only if the literal is not representable,
    /// which cannot happen for the constants used in this crate.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64_lossy(x)
    }

    /// Convert an integer count.
    #[inline]
    fn from_count(n: u64) -> Self {
        Self::from_f64_lossy(n as f64)
    }
}

impl Real for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }

    #[inline]
    fn log_gamma(self) -> Self {
        libm::lgamma(self)
    }

    #[inline]
    fn to_f64_exact(self) -> f64 {
        self
    }

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x
    }
}

impl Real for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }

    #[inline]
    fn log_gamma(self) -> Self {
        libm::lgammaf(self)
    }

    #[inline]
    fn to_f64_exact(self) -> f64 {
        self as f64
    }

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }
}
