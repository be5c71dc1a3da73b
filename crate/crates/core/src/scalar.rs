//! Scalar abstraction for the numeric kernels.
//!
//! Core math (tensors, sparse algebra, spectral filtering, mesh sampling) is
//! generic over [`Scalar`]; the crate root exports concrete `f64` aliases,
//! which is what the trainer and CLI use throughout.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point scalar usable in every numeric kernel of this crate.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Shorthand conversion from an `f64` constant.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    /// Lossy widening to `f64` for reporting and file output.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
