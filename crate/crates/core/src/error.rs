use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("could not obtain strongly connected graph after {attempts} attempts (n={n}, prob={prob})")]
    NotStronglyConnected { n: usize, prob: f64, attempts: u32 },

    #[error("graph is not strongly connected")]
    Disconnected,

    #[error("weight matrix violates {0}")]
    InvalidWeights(String),

    #[error("consensus did not terminate within {rounds} rounds (spread {spread:e}, eps {eps:e})")]
    NoTermination { rounds: usize, spread: f64, eps: f64 },

    #[error("{algorithm} produced non-finite iterates at iteration {iteration}; step size may be too large")]
    Diverged { algorithm: String, iteration: usize },

    #[error(
        "reference solver did not reach gradient norm {tol:e} within {iterations} iterations (last {grad_norm:e})"
    )]
    ReferenceNotConverged { tol: f64, iterations: usize, grad_norm: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{0}")]
    Trace(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    /// True for errors in an experiment configuration rather than a failed run.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
