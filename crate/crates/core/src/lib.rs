//! Eigen-inference for large Wishart sample covariance matrices.
//!
//! The crate is layered bottom-up:
//!
//! * [`series`]: truncated power series in one and two variables.
//! * [`moments`]: first-order limiting moments of a sample covariance matrix.
//! * [`fluctuation`]: covariance of trace-power fluctuations.
//! * [`lab`]: seeded Monte Carlo sampling of real and complex Wishart matrices.
//! * [`inference`]: tests, estimators, order selection and classical baselines.
//! * [`experiments`]: Monte Carlo drivers for the standard benchmark tables.

pub mod experiments;
pub mod fluctuation;
pub mod inference;
pub mod lab;
pub mod moments;
pub mod series;

/// Scalar field of the observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    /// Real Gaussian data, `beta = 1`.
    Real,
    /// Complex Gaussian data, `beta = 2`.
    Complex,
}

impl Field {
    pub fn from_beta(beta: u8) -> Option<Self> {
        match beta {
            1 => Some(Field::Real),
            2 => Some(Field::Complex),
            _ => None,
        }
    }

    pub fn beta(self) -> u8 {
        match self {
            Field::Real => 1,
            Field::Complex => 2,
        }
    }

    /// The factor `2 / beta` multiplying every fluctuation covariance.
    pub fn covariance_scale(self) -> f64 {
        2.0 / self.beta() as f64
    }
}
