use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("kappa must be positive (got {0})")]
    NonPositiveKappa(f64),
    #[error("parameter `{name}` must be finite (got {value})")]
    NonFinite { name: &'static str, value: f64 },
    #[error("n_spins must be at least 1")]
    EmptySystem,
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no stable stationary Bloch point in the time-crystal phase (omega/kappa = {0})")]
    NoStationaryPoint(f64),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("integration produced a non-finite state at t = {0}")]
    NonFiniteState(f64),
    #[error("Bloch norm drift {drift:e} exceeds {limit:e}")]
    NormDrift { drift: f64, limit: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("memory budget exceeded: need {needed} bytes, budget is {budget} bytes")]
    MemoryBudget { needed: u64, budget: u64 },
    #[error("eigensolver did not converge (best residual {best_residual:e})")]
    NoConvergence { best_residual: f64 },
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("series too short: need at least {required} samples after transient removal, got {got}")]
    SeriesTooShort { required: usize, got: usize },
    #[error("no oscillatory content")]
    NoOscillation,

    #[error("checkpoint belongs to a different plan (expected {expected}, found {found})")]
    PlanMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Coarse category used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            NonPositiveKappa(_) | NonFinite { .. } | EmptySystem | Config(_) | PlanMismatch { .. } => {
                ErrorCategory::Config
            }
            MemoryBudget { .. } | Io(_) => ErrorCategory::Resource,
            Json(_) | Csv(_) => ErrorCategory::Resource,
            _ => ErrorCategory::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numeric,
    Resource,
}
