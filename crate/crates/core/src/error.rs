use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty committee")]
    EmptyCommittee,

    #[error("model index {index} out of range for a library of {num_models} models")]
    ModelOutOfRange { index: usize, num_models: usize },

    #[error("invalid archive: {0}")]
    InvalidArchive(String),

    #[error("library too large for exhaustive search ({num_models} models, cap {cap})")]
    LibraryTooLarge { num_models: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot flip with one class")]
    SingleClassFlip,

    #[error("infeasible zoo target: {0}")]
    InfeasibleTarget(String),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("malformed IDX data: {0}")]
    Idx(String),

    #[error("{path}: {source}")]
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArchive(msg.into())
    }
}
