use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the sampling, solving and estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error(
        "embedding not positive definite: min eigenvalue {min_eigenvalue:e} after trying padding {padding_tried:?}"
    )]
    NotPositiveDefinite {
        min_eigenvalue: f64,
        padding_tried: Vec<Vec<usize>>,
    },

    #[error("conjugate gradients did not converge in {iterations} iterations (final relative residual {final_residual:e})")]
    SolverDiverged {
        iterations: usize,
        final_residual: f64,
        residual_history: Vec<f64>,
    },

    #[error("level {level}, sample {sample}: {source}")]
    Sample {
        level: usize,
        sample: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("ill-conditioned extrapolation: {0}")]
    IllConditioned(String),

    #[error("bias {bias:e} still exceeds target {target:e} at the maximum level {max_level}")]
    MaxLevelReached {
        max_level: usize,
        bias: f64,
        target: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => 2,
            Error::Io { .. } => 1,
            _ => 3,
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
