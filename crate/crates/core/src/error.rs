//! Error type shared by the simulation and oracle modules.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum SimError {
    /// An operation that draws dormancy rates was given a measure with
    /// zero total mass.
    #[error("no dormancy possible: rate measure has zero total mass")]
    EmptyMeasure,

    #[error("invalid rate measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The simulated state has total transition rate zero and can never
    /// move again.
    #[error("stuck state: total transition rate is zero")]
    StuckState,

    #[error("cannot sample from an empty dormant bank")]
    EmptyBank,

    #[error("linear system is singular or near-singular (condition estimate {0:.3e})")]
    SingularSystem(f64),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
