use thiserror::Error;

/// Errors raised by the simulation, analysis and planning routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown coupling kind `{0}`")]
    UnknownCouplingKind(String),

    #[error("non-finite amplitude produced at t = {time}; reduce the step size")]
    NonFinite { time: f64 },

    #[error("state has weight {0:.3e} in the phonon branch; a pure photon state is required")]
    NotPhotonState(f64),

    #[error("quadratic decay law inapplicable: gamma * tau = {0} >= 1")]
    QuadraticLawViolated(f64),

    #[error("survival probability vanished inside a fit window at t = {0}")]
    ZeroSurvival(f64),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("device spacing {spacing} is not below the quadratic-regime limit {limit}")]
    SpacingTooLarge { spacing: f64, limit: f64 },

    #[error("no feasible device count in [0, {0}]")]
    NoFeasiblePlan(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
