use thiserror::Error;

/// Errors produced by dataset handling, model plumbing, and the two
/// adaptation stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("all centroids are empty; cannot assign labels")]
    AllCentroidsEmpty,

    #[error("unknown sample id {0}")]
    UnknownSampleId(usize),

    #[error("class index {index} out of range (K = {num_classes})")]
    ClassOutOfRange { index: usize, num_classes: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}: {what}")]
    Diverged {
        epoch: usize,
        batch: usize,
        what: String,
    },

    #[error("malformed file at byte offset {offset}: {what}")]
    Format { offset: u64, what: String },

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
