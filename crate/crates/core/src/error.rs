use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(ValidationReport),

    #[error("model is not ergodic (rho = {rho})")]
    NonErgodic { rho: f64 },

    #[error("rho = lambda*p/nu_K is undefined because nu_K = 0 with q = r = 1")]
    UndefinedRho,

    #[error("singular linear system at level {level}")]
    Singular { level: usize },

    #[error("boundary null space is not one-dimensional")]
    DegenerateNullSpace,

    #[error("rate rows did not converge before depth cap {cap} (last L1 change {last_change:e})")]
    ConvergenceFailure { cap: usize, last_change: f64 },

    #[error("parameter regime mismatch: {0}")]
    Regime(String),

    #[error("{what} {value} out of range (allowed {allowed})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        allowed: String,
    },

    #[error("series of length {len} is too short for window {window}")]
    SeriesTooShort { len: usize, window: usize },
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. } | Error::DegenerateNullSpace | Error::ConvergenceFailure { .. }
        )
    }
}
