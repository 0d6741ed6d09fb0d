//! Kolmogorov–Arnold and classic neural layers with hand-written gradients,
//! plus a seeded benchmark harness for binary intrusion detection.

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod kan;
pub mod layers;
pub mod models;
pub mod spline;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use models::{build, Model, ModelKind, ModelSpec};
pub use spline::{make_grid, SplineGrid};
pub use tensor::Tensor;
