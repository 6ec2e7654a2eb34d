//! Crate-wide error type.

use crate::linalg::SolveReport;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear solve failed ({context}): {iterations} iterations, residual {residual:.3e}")]
    SolveFailure {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("numerically singular matrix ({0})")]
    SingularMatrix(String),

    #[error("time step {m} failed (dW = {dw:.6e}): {source}")]
    StepFailure {
        m: usize,
        dw: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn solve_failure(context: impl Into<String>, report: &SolveReport) -> Self {
        Error::SolveFailure {
            context: context.into(),
            iterations: report.iterations,
            residual: report.residual,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
