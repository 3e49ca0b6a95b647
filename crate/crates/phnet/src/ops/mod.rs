//! Differentiable tensor operations recorded on a [`crate::tape::Tape`].
//!
//! Each op pushes its forward value plus a backward closure. Conventions:
//! activations are `[batch, channel, spatial...]`, matrices are row-major
//! 2-D, and all shape errors are programmer errors (panics), since shapes
//! are fixed by validated configs before any op runs.

pub mod basic;
pub mod conv;
pub mod loss;
pub mod norm;

pub use basic::*;
pub use conv::*;
pub use loss::*;
pub use norm::*;
