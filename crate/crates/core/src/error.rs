use std::path::PathBuf;

use crate::scheme::State;

/// Errors produced by mesh construction, discrete operators, solves and experiments.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear solve failed: relative residual {residual:.3e} (tolerance {tol:.3e})")]
    SolverFailure { residual: f64, tol: f64 },

    /// The Picard sub-iteration did not reach its tolerance. `last` holds the
    /// final iterate so the caller can inspect it or retry with a smaller step.
    #[error("Picard iteration did not converge after {iterations} iterations (last update {update:.3e})")]
    NonConvergence {
        iterations: usize,
        update: f64,
        last: Box<State>,
    },

    #[error("numerical blow-up at t = {time}: sup norm {linf:.3e}")]
    BlowUp { time: f64, linf: f64 },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
