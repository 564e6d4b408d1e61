use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config line {line}: key `{key}`: {message}")]
    ConfigKey {
        line: usize,
        key: String,
        message: String,
    },

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("solution blew up: |value| = {value:.3e} exceeds limit {limit:.3e}")]
    Instability { value: f64, limit: f64 },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Strips any step annotation.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }
}
