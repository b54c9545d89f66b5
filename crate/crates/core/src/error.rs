use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{rejected} of {total} rows rejected in {path} (limit {limit}); first: {first}")]
    TooManyBadRows {
        path: PathBuf,
        rejected: usize,
        total: usize,
        limit: usize,
        first: String,
    },

    #[error("no usable quotes after filtering")]
    NoUsableQuotes,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in parameter block `{block}`")]
    NonFinite { block: String },

    #[error("training diverged at epoch {epoch}; last good epoch {last_good:?}")]
    Diverged { epoch: usize, last_good: Option<usize> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal pricing error: {0}")]
    Pricing(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
