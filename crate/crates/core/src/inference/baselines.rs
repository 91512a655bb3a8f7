//! Classical eigenvalue estimators and tests, plus the spike detectability
//! diagnostic.

use crate::lab::FieldMatrix;
use crate::moments::PopulationModel;

use super::InferenceError;

const UNITARY_TOL: f64 = 1e-8;

fn block_ranges(multiplicities: &[usize], len: usize) -> Result<Vec<std::ops::Range<usize>>, InferenceError> {
    let total: usize = multiplicities.iter().sum();
    if total != len || multiplicities.contains(&0) {
        return Err(InferenceError::MultiplicityMismatch { total, expected: len });
    }
    let mut start = 0;
    Ok(multiplicities
        .iter()
        .map(|&m| {
            let r = start..start + m;
            start += m;
            r
        })
        .collect())
}

fn block_means(values: &[f64], multiplicities: &[usize]) -> Result<Vec<f64>, InferenceError> {
    Ok(block_ranges(multiplicities, values.len())?
        .into_iter()
        .map(|r| {
            let m = r.len() as f64;
            values[r].iter().sum::<f64>() / m
        })
        .collect())
}

/// Block averages of the descending sample eigenvalues.
pub fn anderson_mle(sample_eigs: &[f64], multiplicities: &[usize]) -> Result<Vec<f64>, InferenceError> {
    block_means(sample_eigs, multiplicities)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AndersonBlock {
    /// `log V_l = (n/2) [sum log l_j - p_l log(mean l_j)]`; `-inf` when degenerate.
    pub log_v: f64,
    /// Some eigenvalue in the block is not positive.
    pub degenerate: bool,
}

impl AndersonBlock {
    pub fn value(&self) -> f64 {
        self.log_v.exp()
    }
}

/// Per-block likelihood-ratio criterion for equal eigenvalues.
pub fn anderson_test(
    sample_eigs: &[f64],
    multiplicities: &[usize],
    n: usize,
) -> Result<Vec<AndersonBlock>, InferenceError> {
    Ok(block_ranges(multiplicities, sample_eigs.len())?
        .into_iter()
        .map(|r| {
            let block = &sample_eigs[r];
            if block.iter().any(|&l| l <= 0.0) {
                return AndersonBlock { log_v: f64::NEG_INFINITY, degenerate: true };
            }
            let m = block.len() as f64;
            let mean = block.iter().sum::<f64>() / m;
            let log_geo = block.iter().map(|l| l.ln()).sum::<f64>();
            AndersonBlock { log_v: 0.5 * n as f64 * (log_geo - m * mean.ln()), degenerate: false }
        })
        .collect())
}

/// Block averages of the diagonal of `U' S U`.
pub fn known_u_estimate(
    s: &FieldMatrix,
    u: &FieldMatrix,
    multiplicities: &[usize],
) -> Result<Vec<f64>, InferenceError> {
    let defect = u.unitarity_defect();
    if defect > UNITARY_TOL {
        return Err(InferenceError::NotUnitary(defect));
    }
    block_means(&s.conjugate_by(u).diagonal(), multiplicities)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detectability {
    pub eigenvalue: f64,
    pub detectable: bool,
    /// Almost-sure limit of the matching sample eigenvalue.
    pub limit: f64,
    /// Largest `p/n` at which this eigenvalue stays detectable.
    pub critical_ratio: f64,
}

/// Phase-transition diagnostic for each eigenvalue of `theta` against a bulk at `lambda`.
pub fn detectability(theta: &PopulationModel, lambda: f64, c: f64) -> Vec<Detectability> {
    theta.blocks().iter().map(|b| detect_one(b.magnitude, lambda, c)).collect()
}

pub fn detect_one(eigenvalue: f64, lambda: f64, c: f64) -> Detectability {
    let edge = lambda * (1.0 + c.sqrt());
    let detectable = eigenvalue > edge;
    let limit = if detectable {
        eigenvalue * (1.0 + lambda * c / (eigenvalue - lambda))
    } else {
        lambda * (1.0 + c.sqrt()).powi(2)
    };
    let critical_ratio = if eigenvalue > lambda { ((eigenvalue - lambda) / lambda).powi(2) } else { 0.0 };
    Detectability { eigenvalue, detectable, limit, critical_ratio }
}
