use thiserror::Error;

/// Errors raised by the solvers and the input layers.
///
/// Variants split into two families: input/validation problems
/// ([`Error::is_config`]) and numerical-domain problems such as evaluating
/// a symmetric solution past its critical time.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid weight at index {index}: {reason}")]
    InvalidWeight { index: usize, reason: String },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("normalization: {0}")]
    Normalization(String),

    #[error("out of domain: {0}")]
    OutOfDomain(String),

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("root finder failed: {0}")]
    Solver(String),

    #[error("series iteration did not converge after {rounds} rounds (last change {change:e})")]
    NoConvergence { rounds: usize, change: f64 },

    #[error("truncation leak {leak:e} exceeds tolerance {tolerance:e} at t={time}")]
    LeakExceeded { leak: f64, tolerance: f64, time: f64 },

    #[error("step size underflow at t={last_time} (step {step:e})")]
    StepUnderflow { last_time: f64, step: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by malformed input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidWeight { .. }
                | Error::InvalidMeasure(_)
                | Error::InvalidArgument { .. }
                | Error::Normalization(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }

    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
