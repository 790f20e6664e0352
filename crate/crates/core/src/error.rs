use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("matrix is not positive semi-definite: smallest eigenvalue {min_eigenvalue:e} (largest {max_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("group {group_id} has {n} observations, at least {min} are required")]
    SampleTooSmall { group_id: usize, n: usize, min: usize },

    #[error("degenerate variance estimate: {0}")]
    DegenerateVariance(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the `covdim` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Domain(_) => 2,
            Error::Data(_)
            | Error::Io { .. }
            | Error::EmptyInput(_)
            | Error::Dimension(_)
            | Error::SampleTooSmall { .. } => 3,
            Error::Numerical(_)
            | Error::NotPsd { .. }
            | Error::DegenerateVariance(_)
            | Error::InvalidScenario(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
