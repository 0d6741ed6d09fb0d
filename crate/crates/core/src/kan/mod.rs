//! Spline-edge layers: dense KAN and its convolutional counterpart.

pub mod conv;
pub mod fit;
pub mod linear;

pub use conv::ConvKan;
pub use fit::{fit_curve, FitConfig};
pub use linear::KanLinear;
