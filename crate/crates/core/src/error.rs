//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A config value or operation precondition failed validation.
    #[error("validation: {0}")]
    Validation(String),

    /// Tensor/vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// IDX file decoding failed.
    #[error("idx: {0}")]
    Idx(#[from] IdxError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// Config file could not be parsed.
    #[error("config (line {line}): {message}")]
    Config { line: usize, message: String },

    /// A sweep or override named a config key that does not exist.
    #[error("unknown config key: {0}")]
    UnknownKey(String),

    /// A theorem-check assertion tripped beyond float slack.
    #[error("theorem violation at round {round}, {step}: {before} -> {after}")]
    TheoremViolation {
        round: usize,
        step: &'static str,
        before: f64,
        after: f64,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

/// Decoding errors for the IDX image/label format, one kind per failure mode.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated file: needed {needed} bytes, had {available}")]
    Truncated { needed: usize, available: usize },

    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}
