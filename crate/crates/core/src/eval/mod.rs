//! Binary metrics and result files.

mod metrics;
pub mod report;

pub use metrics::{Confusion, Metrics};
pub use report::emit_results;
