use thiserror::Error;

use crate::belief::BeliefError;
use crate::estimator::EstimatorError;
use crate::harness::LogError;
use crate::policy::PolicyError;
use crate::task::TaskError;
use crate::voi::VoiError;

/// Crate-wide error. Each module has its own error enum; this wraps them
/// for code paths that cross module boundaries.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Voi(#[from] VoiError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
