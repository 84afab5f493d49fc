use std::io;

/// Errors surfaced by the library. Verification failures are not errors;
/// they are reported through the various `*Report` types.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point violates constraint {row} by {violation:e}")]
    Infeasible { row: usize, violation: f64 },

    #[error("constraint set is empty (feasibility residual {residual:e})")]
    EmptyRegion { residual: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("cone projection did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("step size underflow at t = {t} after {steps} steps")]
    StepUnderflow { t: f64, steps: usize },

    #[error("stopping event not reached by t = {t}")]
    EventNotReached { t: f64 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
