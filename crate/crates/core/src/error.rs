use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{locus}: parse error: {message}")]
    Parse { locus: String, message: String },

    #[error("schema: {0}")]
    Schema(String),

    #[error("rle: {0}")]
    Codec(String),

    #[error("{locus}: {message}")]
    Validation { locus: String, message: String },

    #[error("{path}: expected {expected} predictions, file looks like {found} predictions")]
    FormatMismatch {
        path: String,
        expected: &'static str,
        found: &'static str,
    },

    #[error("{0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("statistics: {0}")]
    Stats(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(locus: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            locus: locus.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(locus: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            locus: locus.into(),
            message: message.to_string(),
        }
    }

    /// True for failures of the environment (files, permissions) rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
