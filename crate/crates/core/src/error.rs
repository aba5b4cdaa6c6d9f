use std::path::PathBuf;

use crate::stylizer::LossReport;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The file is a well-formed RIFF/WAVE file, but uses an encoding we do not read.
    #[error("unsupported wav format: {0}")]
    Format(String),

    /// The file is not a readable RIFF/WAVE stream (truncated, bad magic, missing chunks).
    #[error("malformed wav data: {0}")]
    Parse(String),

    /// Audio samples or metadata violate a clip invariant.
    #[error("invalid audio: {0}")]
    Validation(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("input too short: {len} samples, need at least {needed}")]
    InputTooShort { len: usize, needed: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("graph construction failed: {0}")]
    Graph(String),

    #[error("graph state error: {0}")]
    State(String),

    /// The objective became non-finite. `report` holds every iteration completed before it.
    #[error("non-finite loss at iteration {iteration}")]
    NumericalFailure { iteration: usize, report: Box<LossReport> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
