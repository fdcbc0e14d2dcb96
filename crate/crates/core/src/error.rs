use thiserror::Error;

/// Errors raised by the solver pipeline. Every message names the module
/// whose contract was violated.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model: {0}")]
    Domain(String),

    #[error("{module}: invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        module: &'static str,
        name: &'static str,
        reason: String,
    },

    #[error("{module}: index {index} out of range (len {len})")]
    Index {
        module: &'static str,
        index: usize,
        len: usize,
    },

    #[error(
        "howard: no convergence at time index {time_index} after {iterations} iterations \
         (last sup-norm change {last_change:e})"
    )]
    NonConvergence {
        time_index: usize,
        iterations: usize,
        last_change: f64,
        history: Vec<f64>,
        last_iterate: Vec<f64>,
    },

    #[error("howard: linear solve failed at time index {time_index}: {reason}")]
    LinearSolve { time_index: usize, reason: String },

    #[error("policy: initial wealth {wealth} is outside the attainable range [{min}, {max}]")]
    UnreachableWealth { wealth: f64, min: f64, max: f64 },

    #[error("policy: path left the grid at time index {time_index}: {reason}")]
    PathEscape { time_index: usize, reason: String },

    #[error("cli: {0}")]
    Config(String),

    #[error("cli: i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(module: &'static str, name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            module,
            name,
            reason: reason.into(),
        }
    }

    /// Process exit code for this error class: 1 validation, 2 solver
    /// nonconvergence, 3 reconstruction failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } | Error::LinearSolve { .. } => 2,
            Error::UnreachableWealth { .. } | Error::PathEscape { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
