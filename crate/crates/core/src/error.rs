//! Error type shared across the crate.

use std::path::PathBuf;

/// Errors produced by dataset handling, network construction, experiment
/// orchestration, and log/plot output.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An IDX file starts with an unexpected magic number.
    #[error("{path}: wrong magic number: expected 0x{expected:08x}, got 0x{got:08x}")]
    IdxMagic {
        path: PathBuf,
        expected: u32,
        got: u32,
    },

    /// An IDX file is shorter than its header declares.
    #[error("{path}: truncated IDX file: need {expected} bytes, file has {actual}")]
    IdxTruncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    /// Image and label files disagree on the number of items.
    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    /// A dataset violates one of its structural invariants.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// A network specification is malformed.
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    /// An experiment configuration is malformed or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A preset name is not in the catalog.
    #[error("unknown preset {0:?} (see `list-presets`)")]
    UnknownPreset(String),

    /// An argument violates an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Matrix/batch dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A repetition kept falling below the accuracy threshold.
    #[error(
        "repetition {repetition}: retry budget of {budget} exhausted \
         (last accuracy {last_accuracy:.4})"
    )]
    RetryBudgetExhausted {
        repetition: usize,
        budget: u32,
        last_accuracy: f64,
    },

    /// Text-format parse failure (dataset files, CSV logs).
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
