use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("collision singularity: bodies {a} and {b} coincide or are closer than the collision floor")]
    Collision { a: usize, b: usize },

    #[error("configuration lies outside the Hill region: U = {u}, h = {h}")]
    OutsideHillRegion { u: f64, h: f64 },

    #[error("inconsistent energy: {0}")]
    InconsistentEnergy(String),

    #[error("time window [{lo}, {hi}] exceeds trajectory span [{span_lo}, {span_hi}]")]
    WindowOutOfSpan {
        lo: f64,
        hi: f64,
        span_lo: f64,
        span_hi: f64,
    },

    #[error("energy drift {drift:e} exceeded budget {budget:e} at t = {t}")]
    DriftBudgetExceeded { t: f64, drift: f64, budget: f64 },

    #[error("classification failed: {0}")]
    Classification(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("optimizer stalled: {0}")]
    OptimizerStall(String),

    #[error("symmetry violated: deviation {deviation:e} exceeds {tolerance:e}")]
    SymmetryViolated { deviation: f64, tolerance: f64 },

    #[error("no root in bracket: {0}")]
    NoRoot(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
