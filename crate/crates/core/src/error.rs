use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// The `kind()` string is stable and is what the command line prints in its
/// machine-readable error line.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("ingestion error in {path} at line {line}: {message}")]
    Ingest {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("normalization error: {0}")]
    Normalization(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("pipeline error: {0}")]
    Pipeline(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Usage(_) => "usage",
            Error::Ingest { .. } => "ingest",
            Error::Alignment(_) => "alignment",
            Error::Normalization(_) => "normalization",
            Error::EmptyDataset(_) => "empty-dataset",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::Pipeline(_) => "pipeline",
            Error::Evaluation(_) => "evaluation",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
