use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the registration and model-building pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("kernel kind mismatch: {0}")]
    KernelKind(String),

    #[error("kernel Gram matrix is indefinite: min eigenvalue {min} vs max {max}")]
    Indefinite { min: f64, max: f64 },

    #[error("optimizer aborted after {iterations} iterations: {reason}")]
    Optimizer { iterations: usize, reason: String },

    #[error("registration stage {stage} failed: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unmatched landmark names: {0:?}")]
    UnmatchedLandmarks(Vec<String>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { context: context.into(), message: message.into() }
    }

    /// True for failures that come from the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Indefinite { .. } | Error::Optimizer { .. } => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
