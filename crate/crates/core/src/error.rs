/// Errors produced by schedules, predictors and solvers.
///
/// Numeric payloads are stored as `f64` regardless of the scalar type the
/// computation ran in; they exist for reporting only.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("time {t} is outside the schedule domain (0, {t_max}]")]
    TimeOutOfDomain { t: f64, t_max: f64 },

    #[error("half-logSNR {lambda} is outside the invertible range [{min}, {max}]")]
    LambdaOutOfRange { lambda: f64, min: f64, max: f64 },

    #[error("unsupported phi order k={k}; only k in 1..=3 is implemented")]
    UnsupportedPhiOrder { k: u32 },

    #[error("mixture weights must be positive and sum to 1 (sum = {sum})")]
    InvalidMixture { sum: f64 },

    #[error("state vectors have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("step plan is empty")]
    EmptyPlan,

    #[error("adaptive solver did not finish within {max_iterations} iterations")]
    NonTermination { max_iterations: u64 },

    #[error("order fit needs at least 3 usable points above the error floor, got {got}")]
    InsufficientPoints { got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn parameter(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
