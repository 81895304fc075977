use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("empty {0} mask")]
    EmptyMask(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear solver not converged after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error(
        "indefinite operator: search direction curvature {curvature:e} at iteration {iteration}"
    )]
    IndefiniteOperator { iteration: usize, curvature: f64 },

    #[error(
        "dt too large for control magnitude: min(1/dt + 1 - f) = {min_diagonal:e} at cell {cell}"
    )]
    DtTooLarge { cell: usize, min_diagonal: f64 },

    #[error("time step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value in {what} at time step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_step(step: usize, err: Error) -> Error {
        match err {
            e @ Error::StepFailed { .. } => e,
            e => Error::StepFailed {
                step,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Error {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
