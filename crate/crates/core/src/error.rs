use std::path::PathBuf;

use crate::solver::SolverTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "underdetermined calibration: {equations} equations for {unknowns} unknowns; \
         an ACS region of at least {required_rows}x{required_cols} is required"
    )]
    Underdetermined {
        equations: usize,
        unknowns: usize,
        required_rows: usize,
        required_cols: usize,
    },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("operator is numerically zero (largest eigenvalue estimate {0:e})")]
    ZeroOperator(f64),

    #[error("backtracking step underflow: gamma {gamma:e} fell below {floor:e}")]
    StepUnderflow { gamma: f64, floor: f64 },

    #[error("iteration diverged at step {iteration}: {reason}")]
    Diverged {
        iteration: usize,
        reason: String,
        trace: Box<SolverTrace>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
