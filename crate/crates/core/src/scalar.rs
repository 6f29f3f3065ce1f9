//! Floating-point abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the model can be instantiated with: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Epsilon added to the variance inside the square root of layer norm.
    const LAYER_NORM_EPS: Self;

    fn from_f64_lossy(v: f64) -> Self;

    fn from_count(v: usize) -> Self {
        Self::from_f64_lossy(v as f64)
    }

    fn to_f64_lossy(self) -> f64;

    fn to_f32_lossy(self) -> f32;
}

impl Scalar for f32 {
    const LAYER_NORM_EPS: Self = 1e-5;

    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }

    fn to_f64_lossy(self) -> f64 {
        self as f64
    }

    fn to_f32_lossy(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    const LAYER_NORM_EPS: Self = 1e-9;

    fn from_f64_lossy(v: f64) -> Self {
        v
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }

    fn to_f32_lossy(self) -> f32 {
        self as f32
    }
}
