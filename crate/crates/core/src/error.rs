use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FexError>;

#[derive(Debug, Error)]
pub enum FexError {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("degenerate normalization: {0}")]
    Normalization(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class index {index} out of range for {n_classes} classes")]
    ClassIndex { index: usize, n_classes: usize },

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("undefined correlation: {0}")]
    Correlation(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("bridge failure: {0}")]
    Bridge(String),

    #[error("protocol error at line {line}: {message}")]
    Protocol { line: usize, message: String },

    #[error("parse error at {}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FexError {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        FexError::Dimension {
            what,
            expected,
            got,
        }
    }

    /// Short machine-parsable tag for the error kind.
    pub fn category(&self) -> &'static str {
        match self {
            FexError::Dimension { .. } => "dimension",
            FexError::Capacity(_) => "capacity",
            FexError::Normalization(_) => "normalization",
            FexError::InvalidArgument(_) => "invalid-argument",
            FexError::ClassIndex { .. } => "class-index",
            FexError::Numeric(_) => "numeric",
            FexError::Correlation(_) => "correlation",
            FexError::Divergence(_) => "divergence",
            FexError::Bridge(_) => "bridge",
            FexError::Protocol { .. } => "protocol",
            FexError::Parse { .. } => "parse",
            FexError::Io(_) => "io",
            FexError::Json(_) => "json",
        }
    }
}
