//! Hypothesis tests, estimators and model-order selection built on the
//! moment and fluctuation engines.

pub mod baselines;
pub mod chisq;
pub mod estimate;
pub mod optimize;
pub mod report;
pub mod testing;
pub mod theta;

use thiserror::Error;

use crate::fluctuation::FluctuationError;
use crate::lab::LabError;
use crate::moments::MomentError;

pub use baselines::{anderson_mle, anderson_test, detectability, known_u_estimate, AndersonBlock, Detectability};
pub use chisq::{chi_square_cdf, chi_square_quantile, chi_square_sf};
pub use estimate::{
    estimate, estimate_then_test, estimate_then_test_stats, estimate_with, select_order, select_order_stats,
    spiked_estimate, spiked_estimate_with, EstimateOptions, EstimateReport, NoiseLevel, OrderReport,
};
pub use testing::{
    build_v, ledoit_wolf, ledoit_wolf_from_traces, sphericity_test, test_statistic, test_statistic_at, Decision,
    TestReport,
};
pub use theta::{Param, ThetaVector};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Fluctuation(#[from] FluctuationError),
    #[error(transparent)]
    Moments(#[from] MomentError),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("invalid parameter vector: {0}")]
    InvalidTheta(String),
    #[error("q = {q} trace powers cannot identify the free parameters; need at least {needed}")]
    QTooSmall { q: usize, needed: usize },
    #[error("need {needed} trace powers, got {got}")]
    TooFewTraces { needed: usize, got: usize },
    #[error("optimizer did not converge from any start")]
    NotConverged(Box<EstimateReport>),
    #[error("objective is not finite at any probed point")]
    NoFeasiblePoint,
    #[error("probability level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("multiplicities sum to {total}, expected {expected} (and must be positive)")]
    MultiplicityMismatch { total: usize, expected: usize },
    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),
    #[error("{0}")]
    InvalidInput(String),
}

impl PartialEq for InferenceError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl InferenceError {
    /// Failures that stem from the numerics rather than from bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            InferenceError::NotConverged(_)
                | InferenceError::NoFeasiblePoint
                | InferenceError::Fluctuation(FluctuationError::NotPositiveDefinite(_))
        )
    }

    /// The best point found when the optimizer ran out of budget.
    pub fn best_effort(self) -> Result<EstimateReport, Self> {
        match self {
            InferenceError::NotConverged(report) => Ok(*report),
            e => Err(e),
        }
    }
}
