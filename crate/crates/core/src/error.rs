use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at record {row}, field `{field}`: {message}")]
    Parse {
        row: usize,
        field: String,
        message: String,
    },

    #[error("dimension error in `{field}`: {message}")]
    Dimension { field: String, message: String },

    #[error("non-finite value in `{field}`")]
    NonFinite { field: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty relevant set: {0}")]
    EmptyRelevantSet(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Dimension {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid input data or arguments, as opposed
    /// to numerical breakdown or I/O.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Dimension { .. }
                | Error::NonFinite { .. }
                | Error::InvalidArgument(_)
                | Error::EmptyRelevantSet(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
