use alloc::string::String;
use core::fmt;

/// The estimator stage that produced a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Orientation,
    Velocity,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Orientation => f.write_str("orientation"),
            Stage::Velocity => f.write_str("velocity"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate quaternion (norm {norm:e})")]
    DegenerateQuaternion { norm: f64 },
    #[error("model dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in row {row} of the {what}")]
    NonFinite { what: &'static str, row: usize },
    #[error("IPG iterate became non-finite at inner iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("{stage} observer diverged at epoch {epoch} (inner iteration {iteration})")]
    StageDivergence {
        stage: Stage,
        epoch: usize,
        iteration: usize,
    },
    #[error("timestamps not strictly increasing at t={t}")]
    Ordering { t: f64 },
    #[error("sensor gap at epoch t={t}: {reason}")]
    Gap { t: f64, reason: String },
    #[error("covariance is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error(
        "alignment is ill-conditioned over the first {n_fixes} fixes (near-stationary segment); use more fixes"
    )]
    IllConditionedAlignment { n_fixes: usize },
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

pub type Result<T> = core::result::Result<T, Error>;
