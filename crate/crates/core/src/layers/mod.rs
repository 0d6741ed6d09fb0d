//! Differentiable layer primitives with explicit forward and backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`;
//! `backward` accumulates parameter gradients and returns the input gradient.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod lstm;
pub mod pool;
pub mod reshape;

pub use activation::{sigmoid, silu, silu_derivative, Activation};
pub use conv::Conv2d;
pub use dense::Dense;
pub use lstm::{Lstm, LstmState, StepCache};
pub use pool::MaxPool2d;
pub use reshape::{reshape_square, square_side, Flatten, RowsAsSequence, SquareReshape};

/// Samples per parallel work unit in convolution-style layers.
pub(crate) const CHUNK: usize = 8;
