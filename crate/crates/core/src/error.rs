use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid template `{name}`: {violations:?}")]
    Template {
        name: String,
        violations: Vec<String>,
    },

    #[error("vocabulary mismatch: {0}")]
    Vocabulary(String),

    #[error("{what} out of range: {value} (expected {expected})")]
    OutOfRange {
        what: &'static str,
        value: String,
        expected: String,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training: {0}")]
    Training(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn out_of_range(
        what: &'static str,
        value: impl ToString,
        expected: impl Into<String>,
    ) -> Self {
        Error::OutOfRange {
            what,
            value: value.to_string(),
            expected: expected.into(),
        }
    }
}
