//! Scalar abstraction so the whole model runs in either `f32` or `f64`.
//!
//! Training defaults to `f32`; the gradient checker re-evaluates the same
//! model in `f64`, which is the "widest" precision mode.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Element dtype codes used by the PHT1 tensor file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    U8 = 1,
    F64 = 2,
}

impl Dtype {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::U8),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn elem_size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
            Dtype::F64 => 8,
        }
    }
}

/// Floating-point element type of model tensors.
pub trait Real:
    LinalgScalar
    + Float
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    const DTYPE: Dtype;

    /// Cast from `f64` (named to avoid clashing with `FromPrimitive`).
    fn from_f64c(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 converts to Real")
    }

    /// Cast to `f64` (named to avoid clashing with `ToPrimitive`).
    fn to_f64c(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("Real converts to f64")
    }
}

impl Real for f32 {
    const DTYPE: Dtype = Dtype::F32;
}

impl Real for f64 {
    const DTYPE: Dtype = Dtype::F64;
}
