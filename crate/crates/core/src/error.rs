use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounds: domain_lo ({lo}) must be < domain_hi ({hi})")]
    InvalidBounds { lo: f64, hi: f64 },

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("non-finite input: {0}")]
    NonFiniteInput(f64),

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("{0}: backward called without a cached forward pass")]
    NoCachedForward(&'static str),

    #[error("kernel {kernel:?} larger than padded input {input:?}")]
    KernelLargerThanInput {
        kernel: [usize; 2],
        input: [usize; 2],
    },

    #[error("empty sequence")]
    EmptySequence,

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("non-finite logit at row {0}")]
    NonFiniteLogit(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("empty file: {}", .0.display())]
    EmptyFile(PathBuf),

    #[error("single-class dataset: stratified split impossible")]
    SingleClassDataset,

    #[error(
        "alias map incomplete: column `{column}` of source `{source_name}` has no canonical name"
    )]
    AliasMapIncomplete { source_name: String, column: String },

    #[error("insufficient rows: needed {needed}, only {available} available")]
    InsufficientRows { needed: usize, available: usize },

    #[error("empty confusion matrix")]
    EmptyConfusion,

    #[error("duplicate run id `{0}`")]
    DuplicateRunId(String),

    #[error("unsupported model kind `{0}`")]
    UnsupportedKind(String),

    #[error("config error: {0}")]
    ConfigParse(String),

    #[error("invalid format: {0}")]
    Format(String),

    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    /// Errors that originate from the input data rather than the model or config.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::SchemaMismatch(_)
                | Error::MissingFile(_)
                | Error::EmptyFile(_)
                | Error::SingleClassDataset
                | Error::AliasMapIncomplete { .. }
                | Error::InsufficientRows { .. }
                | Error::Csv(_)
                | Error::Format(_)
        )
    }
}
