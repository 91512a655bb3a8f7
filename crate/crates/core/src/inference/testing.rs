//! Chi-square tests on trace-power fluctuations.

use nalgebra::DVector;

use crate::fluctuation::{mean_from_moments, second_order_covariances, FluctuationMatrix, MeanCorrection};
use crate::lab::{FieldMatrix, TraceStats};
use crate::moments::{MomentSet, PopulationModel};

use super::chisq::{chi_square_quantile, chi_square_sf};
use super::InferenceError;

pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Accept => "accept",
            Decision::Reject => "reject",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub kind: &'static str,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub threshold: f64,
    pub decision: Decision,
    /// Population model under the null, when the test has one.
    pub theta: Option<PopulationModel>,
    pub notes: Vec<String>,
}

impl TestReport {
    pub fn from_statistic(kind: &'static str, statistic: f64, dof: usize, level: f64) -> Result<Self, InferenceError> {
        let threshold = chi_square_quantile(level, dof)?;
        let decision = if statistic > threshold { Decision::Reject } else { Decision::Accept };
        Ok(Self {
            kind,
            statistic,
            dof,
            p_value: chi_square_sf(statistic, dof),
            threshold,
            decision,
            theta: None,
            notes: Vec::new(),
        })
    }

    pub fn accepted(&self) -> bool {
        self.decision == Decision::Accept
    }
}

fn check_traces(stats: &TraceStats, q: usize) -> Result<(), InferenceError> {
    if q == 0 {
        return Err(InferenceError::InvalidInput("need at least one trace power".into()));
    }
    if stats.q_max() < q {
        return Err(InferenceError::TooFewTraces { needed: q, got: stats.q_max() });
    }
    Ok(())
}

/// `v_j = Tr S^j - E[Tr S^j]` under `theta`, for `j = 1..=q`.
pub fn build_v(
    theta: &PopulationModel,
    stats: &TraceStats,
    q: usize,
) -> Result<(DVector<f64>, MeanCorrection), InferenceError> {
    check_traces(stats, q)?;
    let moments = MomentSet::new(theta, stats.aspect_ratio(), q.max(2))?;
    residual(&moments, stats, q)
}

pub(crate) fn residual(
    moments: &MomentSet,
    stats: &TraceStats,
    q: usize,
) -> Result<(DVector<f64>, MeanCorrection), InferenceError> {
    let (mean, correction) = mean_from_moments(moments, stats.p, q, stats.field)?;
    Ok((DVector::from_iterator(q, stats.trace_powers[..q].iter().zip(&mean).map(|(t, m)| t - m)), correction))
}

/// `(v' Q^{-1} v, log det Q)` through a Cholesky factorization.
pub fn quadratic_form(q: &FluctuationMatrix, v: &DVector<f64>) -> Result<(f64, f64), InferenceError> {
    let chol = q.cholesky()?;
    let l = chol.l_dirty();
    let w = l
        .view((0, 0), (v.len(), v.len()))
        .solve_lower_triangular(v)
        .ok_or(InferenceError::Fluctuation(crate::fluctuation::FluctuationError::NotPositiveDefinite(q.side())))?;
    let log_det = 2.0 * (0..q.side()).map(|i| l[(i, i)].ln()).sum::<f64>();
    Ok((w.norm_squared(), log_det))
}

/// Tests `Sigma = Sigma_theta0` with `q` trace powers at the given level.
pub fn test_statistic_at(
    theta0: &PopulationModel,
    stats: &TraceStats,
    q: usize,
    level: f64,
) -> Result<TestReport, InferenceError> {
    check_traces(stats, q)?;
    let moments = MomentSet::new(theta0, stats.aspect_ratio(), 2 * q)?;
    let (v, correction) = residual(&moments, stats, q)?;
    let cov = second_order_covariances(&moments.alpha_stilde, q, stats.field)?;
    let (h, _) = quadratic_form(&cov, &v)?;
    let mut report = TestReport::from_statistic("test", h, q, level)?;
    report.theta = Some(theta0.clone());
    report.notes.extend(correction.note());
    Ok(report)
}

pub fn test_statistic(theta0: &PopulationModel, stats: &TraceStats, q: usize) -> Result<TestReport, InferenceError> {
    test_statistic_at(theta0, stats, q, DEFAULT_LEVEL)
}

/// Two-moment test of `Sigma = I`.
pub fn sphericity_test(stats: &TraceStats) -> Result<TestReport, InferenceError> {
    let mut report = test_statistic(&PopulationModel::identity(), stats, 2)?;
    report.kind = "sphericity";
    Ok(report)
}

/// Ledoit-Wolf sphericity statistic from `Tr S` and `Tr S^2`.
pub fn ledoit_wolf_from_traces(tr1: f64, tr2: f64, p: usize, n: usize) -> Result<TestReport, InferenceError> {
    let (pf, nf) = (p as f64, n as f64);
    let c = pf / nf;
    let centered = (tr2 - 2.0 * tr1 + pf) / pf;
    let lw = nf * pf / 2.0 * (centered - c * (tr1 / pf).powi(2) + c);
    let mut report = TestReport::from_statistic("ledoit-wolf", lw, p * (p + 1) / 2, DEFAULT_LEVEL)?;
    report.theta = Some(PopulationModel::identity());
    Ok(report)
}

pub fn ledoit_wolf(s: &FieldMatrix, n: usize) -> Result<TestReport, InferenceError> {
    let stats = crate::lab::trace_powers(s, n, 2)?;
    ledoit_wolf_from_traces(stats.trace(1), stats.trace(2), stats.p, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluctuation::mean_vector;
    use crate::Field;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn stats_at(theta: &PopulationModel, p: usize, n: usize, field: Field, q: usize) -> TraceStats {
        TraceStats { p, n, field, trace_powers: mean_vector(theta, p, n, q, field).unwrap(), eigenvalues: None }
    }

    #[test]
    fn residual_vanishes_at_expectation() {
        let theta = PopulationModel::two_block(2.0, 1.0, 0.5).unwrap();
        let stats = stats_at(&theta, 80, 40, Field::Real, 4);
        let (v, corr) = build_v(&theta, &stats, 4).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-12));
        assert_eq!(corr.unmodeled, vec![3, 4]);
        let r = test_statistic(&theta, &stats, 2).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.accepted());
        assert!(r.notes.is_empty());
        assert_eq!(test_statistic(&theta, &stats, 3).unwrap().notes.len(), 1);
    }

    #[test]
    fn residual_entries() {
        let theta = PopulationModel::two_block(2.0, 1.0, 0.5).unwrap();
        let stats =
            TraceStats { p: 40, n: 20, field: Field::Complex, trace_powers: vec![61.0, 300.0], eigenvalues: None };
        let (v, _) = build_v(&theta, &stats, 2).unwrap();
        assert_relative_eq!(v[1], 300.0 - 40.0 * (2.5 + 2.0 * 1.5 * 1.5), max_relative = 1e-14);
        let id = PopulationModel::identity();
        let stats = TraceStats { p: 30, n: 30, field: Field::Real, trace_powers: vec![30.0, 70.0], eigenvalues: None };
        let (v, _) = build_v(&id, &stats, 2).unwrap();
        assert_relative_eq!(v[1], 70.0 - 2.0 * 30.0 - 1.0, max_relative = 1e-14);
    }

    #[test]
    fn threshold_and_decision() {
        let r = TestReport::from_statistic("test", 10.3, 2, 0.95).unwrap();
        assert_eq!(r.decision, Decision::Reject);
        assert!((r.threshold - 5.9914).abs() < 1e-4);
        assert_relative_eq!(r.p_value, (-5.15f64).exp(), max_relative = 1e-12);
        assert!(TestReport::from_statistic("test", 5.99, 2, 0.95).unwrap().accepted());
    }

    #[test]
    fn too_few_traces() {
        let stats = TraceStats { p: 4, n: 4, field: Field::Real, trace_powers: vec![4.0], eigenvalues: None };
        assert!(matches!(sphericity_test(&stats), Err(InferenceError::TooFewTraces { needed: 2, got: 1 })));
    }

    #[test]
    fn ledoit_wolf_vanishes_at_identity() {
        let r = ledoit_wolf(&FieldMatrix::Real(DMatrix::identity(6, 6)), 6).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert_eq!(r.dof, 21);
        assert!(r.accepted());
    }
}
