//! Minimal dense-tensor core with reverse-mode differentiation.
//!
//! Just enough machinery for a small causal transformer: matrix
//! multiply, concatenation, masked softmax, layer normalization,
//! dropout, the usual element-wise ops, a backward pass, and Adam.
//! Storage is 32-bit by default; everything is generic over [`Scalar`]
//! so gradient checks can run the identical code path in 64-bit.
//!
//! Graphs are define-by-run: ops record their inputs and a backward
//! closure, [`Tensor::backward`] walks the graph in reverse topological
//! order. Single-threaded by construction (`Rc`, not `Arc`), which is
//! what makes training trajectories bitwise reproducible.

pub mod adam;
pub mod gradcheck;
mod ops;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use tensor::{Mask, Tensor};

/// Element type of tensors: `f32` for production, `f64` for
/// verification mode.
pub trait Scalar:
    num_traits::Float + std::fmt::Debug + std::fmt::Display + std::iter::Sum + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}
