//! Scalar abstraction for the numeric core.
//!
//! Tensor math, calibration, and metrics are generic over [`Scalar`] so the
//! same code runs in `f32` or `f64`. The crate root exports concrete aliases
//! pinned to `f64`, which is what the training engine and all file formats use.

use num_traits::{Float, FromPrimitive, NumAssignOps, NumCast};

/// Floating-point scalar usable throughout the numeric core.
pub trait Scalar:
    Float + FromPrimitive + NumCast + NumAssignOps + Default + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64` (exact for `f64`, rounded for `f32`).
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 -> scalar conversion")
    }

    /// Widening conversion to `f64` (exact for both supported types).
    fn into_f64(self) -> f64 {
        NumCast::from(self).expect("scalar -> f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
