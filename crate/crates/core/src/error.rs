use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid state in cell {cell}: {reason}")]
    InvalidState { cell: usize, reason: String },

    /// The positivity limiter cannot repair a cell whose mean is already negative.
    #[error("negative cell average {mean:e} of component {component} in cell ({i}, {j})")]
    NegativeMean {
        i: usize,
        j: usize,
        component: usize,
        mean: f64,
    },

    #[error("non-finite residual in cell ({i}, {j}), component {component}")]
    NonFinite {
        i: usize,
        j: usize,
        component: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed snapshot: {reason}")]
    Parse { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
