//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {message}")]
    Parameter { name: String, message: String },

    #[error("field is {got_nx}x{got_ny} cells but the lattice needs {want_nx}x{want_ny}")]
    FieldSizeMismatch {
        got_nx: usize,
        got_ny: usize,
        want_nx: usize,
        want_ny: usize,
    },

    #[error("state has {got} entries, model has {want} sites")]
    StateSizeMismatch { got: usize, want: usize },

    #[error("non-finite value in {context} at t = {time}")]
    NonFinite { context: String, time: f64 },

    #[error("{context}: matrix deviates from Hermitian by {deviation:.3e}")]
    NotHermitian { context: String, deviation: f64 },

    #[error("eigensolver did not converge within {iterations} iterations")]
    EigenConvergence { iterations: usize },

    #[error("eigenpair residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    EigenResidual { residual: f64, tol: f64 },

    #[error("branches are degenerate at the requested momentum (gap {gap:.3e})")]
    DegenerateBranch { gap: f64 },

    #[error("no band crossing found: positive branches split by {gap:.3e} at k = 0")]
    NoCrossing { gap: f64 },

    #[error("energy grew to {ratio:.3}x its initial value by t = {time}; integration aborted")]
    Instability { ratio: f64, time: f64 },

    #[error("state norm drifted by {drift:.3e} (limit {limit:.3e}) by t = {time}")]
    NormDrift { drift: f64, limit: f64, time: f64 },

    #[error("time step {dt} exceeds the stability bound {bound}")]
    TimeStepTooLarge { dt: f64, bound: f64 },

    #[error("run invalid: {reason}")]
    InvalidRun { reason: String },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Shorthand for a named parameter error.
    pub fn param(name: &str, message: impl Into<String>) -> Self {
        Error::Parameter {
            name: name.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
