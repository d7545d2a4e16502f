use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("history length L = {history} must be smaller than the trajectory length N_T = {steps}")]
    InvalidWindowLength { history: usize, steps: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("monotonicity error: {0}")]
    Monotonicity(String),

    #[error("simulation diverged at step {step}: {context}")]
    Divergence { step: usize, context: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    TrainingDiverged { epoch: usize, batch: usize, loss: f64 },

    #[error("ensemble member {member} failed: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{}: expected {expected} bytes, found {found}", path.display())]
    ByteLength {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{}: manifest declares {expected} frames, file holds {found}", path.display())]
    FrameCount {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: String, expected: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for failures caused by non-finite numbers or blown-up dynamics.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::NonFinite(_) | Error::TrainingDiverged { .. } => true,
            Error::Member { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    /// True for filesystem or on-disk format failures.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_)
            | Error::Format { .. }
            | Error::ByteLength { .. }
            | Error::FrameCount { .. }
            | Error::Version { .. } => true,
            Error::Member { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
