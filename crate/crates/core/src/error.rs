use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A covariance matrix or model could not be assembled (e.g. not positive definite).
    #[error("construction error: {0}")]
    Construction(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear system was singular or an iterative solver diverged.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An imbalance correction could not be applied to the given data.
    #[error("correction failed: {0}")]
    Correction(String),

    /// A learner could not be trained on the given data.
    #[error("training failed: {0}")]
    Training(String),

    /// Shapes or formats of two collaborating pieces disagree.
    #[error("interface error: {0}")]
    Interface(String),

    /// A metric is undefined for the given inputs (one class, constant risks, ...).
    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("ingestion error at row {row}, column '{column}': {message}")]
    Ingest {
        row: usize,
        column: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the file system rather than by the computation.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}
