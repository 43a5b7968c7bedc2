use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("abstract bounds exploded at step {step}")]
    BoundExplosion { step: usize },

    #[error("certificate metadata mismatch: {0}")]
    MetadataMismatch(String),

    #[error("malformed {kind} file {path}: {reason}")]
    Parse {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::Diverged(_) => "diverged",
            Error::BoundExplosion { .. } => "bound_explosion",
            Error::MetadataMismatch(_) => "metadata_mismatch",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(kind: &'static str, path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Parse {
            kind,
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
