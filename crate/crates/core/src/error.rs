use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error: {0}")]
    Stream(#[from] std::io::Error),

    /// A mention-store file could not be decoded. `field` names the part of
    /// the layout that was rejected.
    #[error("malformed store ({field}): {reason}")]
    Format { field: &'static str, reason: String },

    /// A value violates a type invariant.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("layer {0} not present in store")]
    MissingLayer(u32),

    #[error("unknown word {0:?}")]
    UnknownWord(String),

    /// An evaluation could not produce a number (too few pairs, no usable
    /// classes, single-class training data, constant input, ...).
    #[error("{0}")]
    Evaluation(String),
}

impl Error {
    pub(crate) fn format(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the evaluation itself, as opposed to bad input
    /// or I/O.
    pub fn is_evaluation(&self) -> bool {
        matches!(self, Error::Evaluation(_))
    }
}
