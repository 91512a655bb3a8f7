//! Second-order covariances of trace powers.
//!
//! For `S~ = X'X/n` with moments `alpha~_j`, the generating function of the
//! fluctuation covariances is
//!
//! ```text
//! M(x, y) = xy [H'(x) H'(y) - D(x, y)^2] / [(x - y)^2 D(x, y)^2],   H(x) = x (1 + sum_j alpha~_j x^j)
//! ```
//!
//! with `D(x, y) = (H(x) - H(y)) / (x - y)`. Both divisions by `x - y` are
//! carried out with exact divided-difference maps, so nothing is ever
//! divided by a vanishing quantity.

use nalgebra::{Cholesky, DMatrix, Dyn};
use thiserror::Error;

use crate::moments::{MomentError, MomentSet, PopulationModel};
use crate::series::{BivariateSeries, SeriesError, TruncatedSeries};
use crate::Field;

/// Largest supported matrix side; needs moments up to order `2 * MAX_SIDE`.
pub const MAX_SIDE: usize = 15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluctuationError {
    #[error("matrix side {0} outside 1..={MAX_SIDE}")]
    UnsupportedSide(usize),
    #[error("need moments up to order {needed}, got {got}")]
    TooFewMoments { needed: usize, got: usize },
    #[error("no tabulated polynomial for entry ({0}, {1})")]
    UnsupportedEntry(usize, usize),
    #[error("covariance matrix of side {0} is not positive definite; try a smaller side")]
    NotPositiveDefinite(usize),
    #[error("dimension and sample count must be positive")]
    EmptyShape,
    #[error(transparent)]
    Moments(#[from] MomentError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Covariance matrix of `(Tr S, Tr S^2, ..., Tr S^q)` in the large-matrix limit.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationMatrix {
    entries: DMatrix<f64>,
    field: Field,
}

impl FluctuationMatrix {
    pub fn side(&self) -> usize {
        self.entries.nrows()
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Entry `(i, j)` with one-based trace-power orders.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i - 1, j - 1)]
    }

    /// Leading `side x side` block, i.e. the matrix for fewer trace powers.
    pub fn leading(&self, side: usize) -> Self {
        Self { entries: self.entries.view((0, 0), (side, side)).into_owned(), field: self.field }
    }

    pub fn cholesky(&self) -> Result<Cholesky<f64, Dyn>, FluctuationError> {
        Cholesky::new(self.entries.clone()).ok_or(FluctuationError::NotPositiveDefinite(self.side()))
    }
}

/// Additive corrections to `E[Tr S^j]` beyond `p alpha_j^S`.
///
/// Only the second order is known in closed form for real data; higher
/// orders are left at zero and listed in [`MeanCorrection::unmodeled`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCorrection {
    pub values: Vec<f64>,
    pub unmodeled: Vec<usize>,
}

impl MeanCorrection {
    pub fn new(alpha2_sigma: f64, c: f64, q: usize, field: Field) -> Self {
        let mut values = vec![0.0; q];
        let mut unmodeled = Vec::new();
        if field == Field::Real {
            if q >= 2 {
                values[1] = alpha2_sigma * c;
            }
            unmodeled.extend(3..=q);
        }
        Self { values, unmodeled }
    }

    /// Human-readable caveat for reports, if any order is unmodeled.
    pub fn note(&self) -> Option<String> {
        let first = *self.unmodeled.first()?;
        Some(format!("real-data mean correction unmodeled for trace powers of order >= {first}"))
    }
}

/// Covariance matrix of side `q` from the moments `alpha~_1..alpha~_{2q}`.
pub fn second_order_covariances(
    alpha_stilde: &[f64],
    q: usize,
    field: Field,
) -> Result<FluctuationMatrix, FluctuationError> {
    let g = unscaled_series(alpha_stilde, q)?;
    let scale = field.covariance_scale();
    let mut entries = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in i..q {
            let v = scale * g.coeff(i, j)?;
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(FluctuationMatrix { entries, field })
}

/// The covariance generating series divided by `xy`, before the `2/beta`
/// factor, truncated at total degree `2q - 2`.
fn unscaled_series(alpha_stilde: &[f64], q: usize) -> Result<BivariateSeries, FluctuationError> {
    if q == 0 || q > MAX_SIDE {
        return Err(FluctuationError::UnsupportedSide(q));
    }
    let order = 2 * q;
    if alpha_stilde.len() < order {
        return Err(FluctuationError::TooFewMoments { needed: order, got: alpha_stilde.len() });
    }
    let mut h = vec![0.0; order + 2];
    h[1] = 1.0;
    h[2..].copy_from_slice(&alpha_stilde[..order]);
    let h = TruncatedSeries::new(h)?;
    // Everything below lives at cap 2q; the two divisions by (x - y) bring
    // the numerator down to 2q - 2.
    let d = h.divided_difference()?;
    let d2 = d.mul(&d)?;
    let dh = h.derivative();
    let numer = BivariateSeries::outer(&dh, &dh).truncate(order).sub(&d2)?;
    let quotient = numer.divide_by_difference().divide_by_difference();
    let inv = d2.truncate(order - 2).reciprocal()?;
    Ok(quotient.mul(&inv)?)
}

/// Expected trace powers `E[Tr S^j]`, `j = 1..=q`, with the correction applied.
pub fn mean_from_moments(
    moments: &MomentSet,
    p: usize,
    q: usize,
    field: Field,
) -> Result<(Vec<f64>, MeanCorrection), FluctuationError> {
    if moments.max_order() < q {
        return Err(FluctuationError::TooFewMoments { needed: q, got: moments.max_order() });
    }
    let correction = MeanCorrection::new(moments.alpha_sigma.get(1).copied().unwrap_or(0.0), moments.c, q, field);
    let mean = moments.alpha_s[..q].iter().zip(&correction.values).map(|(a, corr)| p as f64 * a + corr).collect();
    Ok((mean, correction))
}

fn aspect_ratio(p: usize, n: usize) -> Result<f64, FluctuationError> {
    if p == 0 || n == 0 {
        return Err(FluctuationError::EmptyShape);
    }
    Ok(p as f64 / n as f64)
}

/// `Q_theta` for a population model at dimension `p` and `n` samples.
pub fn q_matrix(
    theta: &PopulationModel,
    p: usize,
    n: usize,
    q: usize,
    field: Field,
) -> Result<FluctuationMatrix, FluctuationError> {
    if q == 0 || q > MAX_SIDE {
        return Err(FluctuationError::UnsupportedSide(q));
    }
    let moments = MomentSet::new(theta, aspect_ratio(p, n)?, 2 * q)?;
    second_order_covariances(&moments.alpha_stilde, q, field)
}

/// Expected trace powers under `theta` at dimension `p` and `n` samples.
pub fn mean_vector(
    theta: &PopulationModel,
    p: usize,
    n: usize,
    q: usize,
    field: Field,
) -> Result<Vec<f64>, FluctuationError> {
    let moments = MomentSet::new(theta, aspect_ratio(p, n)?, q.max(2))?;
    Ok(mean_from_moments(&moments, p, q, field)?.0)
}

/// Evaluates the tabulated closed-form polynomial for entry `(i, j)`,
/// `i, j <= 5`, at moments `alpha[0] = alpha_1, ...`. Unscaled by `2/beta`.
pub fn polynomial_oracle(alpha: &[f64], i: usize, j: usize) -> Result<f64, FluctuationError> {
    let key = (i.max(j), i.min(j));
    let terms =
        POLYNOMIALS.iter().find(|(k, _)| *k == key).map(|(_, t)| *t).ok_or(FluctuationError::UnsupportedEntry(i, j))?;
    if alpha.len() < i + j {
        return Err(FluctuationError::TooFewMoments { needed: i + j, got: alpha.len() });
    }
    Ok(terms
        .iter()
        .map(|(coef, factors)| *coef as f64 * factors.iter().map(|&(k, e)| alpha[k - 1].powi(e)).product::<f64>())
        .sum())
}

type Monomial = &'static [(usize, i32)];
type Polynomial = &'static [(i64, Monomial)];

// (coefficient, [(moment order, exponent)]) for each entry (i, j), i >= j.
#[rustfmt::skip]
const POLYNOMIALS: &[((usize, usize), Polynomial)] = &[
    ((1, 1), &[
        (1, &[(2, 1)]),
        (-1, &[(1, 2)]),
    ]),
    ((2, 1), &[
        (-4, &[(1, 1), (2, 1)]),
        (2, &[(1, 3)]),
        (2, &[(3, 1)]),
    ]),
    ((2, 2), &[
        (16, &[(1, 2), (2, 1)]),
        (-6, &[(2, 2)]),
        (-6, &[(1, 4)]),
        (-8, &[(1, 1), (3, 1)]),
        (4, &[(4, 1)]),
    ]),
    ((3, 1), &[
        (9, &[(1, 2), (2, 1)]),
        (-6, &[(1, 1), (3, 1)]),
        (-3, &[(2, 2)]),
        (3, &[(4, 1)]),
        (-3, &[(1, 4)]),
    ]),
    ((3, 2), &[
        (6, &[(5, 1)]),
        (30, &[(1, 1), (2, 2)]),
        (-42, &[(1, 3), (2, 1)]),
        (-18, &[(2, 1), (3, 1)]),
        (12, &[(1, 5)]),
        (24, &[(1, 2), (3, 1)]),
        (-12, &[(1, 1), (4, 1)]),
    ]),
    ((3, 3), &[
        (-18, &[(3, 2)]),
        (-27, &[(2, 1), (4, 1)]),
        (9, &[(6, 1)]),
        (-30, &[(1, 6)]),
        (21, &[(2, 3)]),
        (36, &[(1, 2), (4, 1)]),
        (-72, &[(1, 3), (3, 1)]),
        (126, &[(1, 4), (2, 1)]),
        (-135, &[(1, 2), (2, 2)]),
        (108, &[(1, 1), (2, 1), (3, 1)]),
        (-18, &[(1, 1), (5, 1)]),
    ]),
    ((4, 1), &[
        (12, &[(1, 1), (2, 2)]),
        (-16, &[(1, 3), (2, 1)]),
        (-8, &[(2, 1), (3, 1)]),
        (12, &[(1, 2), (3, 1)]),
        (-8, &[(1, 1), (4, 1)]),
        (4, &[(1, 5)]),
        (4, &[(5, 1)]),
    ]),
    ((4, 2), &[
        (-12, &[(3, 2)]),
        (-24, &[(2, 1), (4, 1)]),
        (8, &[(6, 1)]),
        (-20, &[(1, 6)]),
        (16, &[(2, 3)]),
        (32, &[(1, 2), (4, 1)]),
        (-56, &[(1, 3), (3, 1)]),
        (88, &[(1, 4), (2, 1)]),
        (-96, &[(1, 2), (2, 2)]),
        (80, &[(1, 1), (2, 1), (3, 1)]),
        (-16, &[(1, 1), (5, 1)]),
    ]),
    ((4, 3), &[
        (96, &[(2, 2), (3, 1)]),
        (60, &[(1, 7)]),
        (84, &[(1, 1), (3, 2)]),
        (432, &[(1, 3), (2, 2)]),
        (180, &[(1, 4), (3, 1)]),
        (-48, &[(3, 1), (4, 1)]),
        (12, &[(7, 1)]),
        (-36, &[(2, 1), (5, 1)]),
        (-24, &[(1, 1), (6, 1)]),
        (144, &[(1, 1), (2, 1), (4, 1)]),
        (48, &[(1, 2), (5, 1)]),
        (-96, &[(1, 3), (4, 1)]),
        (-156, &[(1, 1), (2, 3)]),
        (-300, &[(1, 5), (2, 1)]),
        (-396, &[(1, 2), (2, 1), (3, 1)]),
    ]),
    ((4, 4), &[
        (-140, &[(1, 8)]),
        (-76, &[(2, 4)]),
        (-48, &[(6, 1), (2, 1)]),
        (256, &[(3, 1), (4, 1), (1, 1)]),
        (-40, &[(4, 2)]),
        (16, &[(8, 1)]),
        (-64, &[(3, 1), (5, 1)]),
        (-32, &[(1, 1), (7, 1)]),
        (1408, &[(1, 3), (2, 1), (3, 1)]),
        (-336, &[(1, 2), (3, 2)]),
        (256, &[(1, 4), (4, 1)]),
        (144, &[(2, 2), (4, 1)]),
        (-480, &[(1, 5), (3, 1)]),
        (160, &[(2, 1), (3, 2)]),
        (64, &[(1, 2), (6, 1)]),
        (-128, &[(1, 3), (5, 1)]),
        (-1440, &[(1, 4), (2, 2)]),
        (832, &[(1, 2), (2, 3)]),
        (800, &[(1, 6), (2, 1)]),
        (-768, &[(1, 1), (2, 2), (3, 1)]),
        (-576, &[(1, 2), (2, 1), (4, 1)]),
        (192, &[(1, 1), (2, 1), (5, 1)]),
    ]),
    ((5, 1), &[
        (-5, &[(3, 2)]),
        (-10, &[(2, 1), (4, 1)]),
        (5, &[(6, 1)]),
        (-5, &[(1, 6)]),
        (5, &[(2, 3)]),
        (15, &[(1, 2), (4, 1)]),
        (-20, &[(1, 3), (3, 1)]),
        (25, &[(1, 4), (2, 1)]),
        (-30, &[(1, 2), (2, 2)]),
        (30, &[(1, 1), (2, 1), (3, 1)]),
        (-10, &[(1, 1), (5, 1)]),
    ]),
    ((5, 2), &[
        (60, &[(2, 2), (3, 1)]),
        (30, &[(1, 7)]),
        (50, &[(1, 1), (3, 2)]),
        (240, &[(1, 3), (2, 2)]),
        (110, &[(1, 4), (3, 1)]),
        (-30, &[(3, 1), (4, 1)]),
        (10, &[(7, 1)]),
        (-30, &[(2, 1), (5, 1)]),
        (-20, &[(1, 1), (6, 1)]),
        (100, &[(1, 1), (2, 1), (4, 1)]),
        (40, &[(1, 2), (5, 1)]),
        (-70, &[(1, 3), (4, 1)]),
        (-90, &[(1, 1), (2, 3)]),
        (-160, &[(1, 5), (2, 1)]),
        (-240, &[(1, 2), (2, 1), (3, 1)]),
    ]),
    ((5, 3), &[
        (-105, &[(1, 8)]),
        (-60, &[(2, 4)]),
        (-45, &[(6, 1), (2, 1)]),
        (210, &[(3, 1), (4, 1), (1, 1)]),
        (-30, &[(4, 2)]),
        (15, &[(8, 1)]),
        (-60, &[(3, 1), (5, 1)]),
        (-30, &[(1, 1), (7, 1)]),
        (1140, &[(1, 3), (2, 1), (3, 1)]),
        (-270, &[(1, 2), (3, 2)]),
        (225, &[(1, 4), (4, 1)]),
        (120, &[(2, 2), (4, 1)]),
        (-390, &[(1, 5), (3, 1)]),
        (135, &[(2, 1), (3, 2)]),
        (60, &[(1, 2), (6, 1)]),
        (-120, &[(1, 3), (5, 1)]),
        (-1125, &[(1, 4), (2, 2)]),
        (660, &[(1, 2), (2, 3)]),
        (615, &[(1, 6), (2, 1)]),
        (-630, &[(1, 1), (2, 2), (3, 1)]),
        (-495, &[(1, 2), (2, 1), (4, 1)]),
        (180, &[(1, 1), (2, 1), (5, 1)]),
    ]),
    ((5, 4), &[
        (-900, &[(1, 2), (4, 1), (3, 1)]),
        (80, &[(1, 2), (7, 1)]),
        (-160, &[(1, 3), (6, 1)]),
        (-620, &[(1, 5), (4, 1)]),
        (-3200, &[(1, 3), (2, 3)]),
        (700, &[(1, 1), (2, 4)]),
        (3960, &[(1, 5), (2, 2)]),
        (-720, &[(1, 2), (5, 1), (2, 1)]),
        (1840, &[(1, 3), (4, 1), (2, 1)]),
        (-4100, &[(1, 4), (3, 1), (2, 1)]),
        (3600, &[(1, 2), (2, 2), (3, 1)]),
        (-1140, &[(1, 1), (3, 2), (2, 1)]),
        (1040, &[(1, 3), (3, 2)]),
        (-440, &[(2, 3), (3, 1)]),
        (440, &[(3, 1), (4, 1), (2, 1)]),
        (240, &[(1, 1), (6, 1), (2, 1)]),
        (320, &[(1, 1), (5, 1), (3, 1)]),
        (-1020, &[(1, 1), (2, 2), (4, 1)]),
        (20, &[(9, 1)]),
        (-1820, &[(1, 7), (2, 1)]),
        (180, &[(2, 2), (5, 1)]),
        (320, &[(1, 4), (5, 1)]),
        (180, &[(1, 1), (4, 2)]),
        (1120, &[(1, 6), (3, 1)]),
        (80, &[(3, 3)]),
        (280, &[(1, 9)]),
        (-40, &[(1, 1), (8, 1)]),
        (-60, &[(7, 1), (2, 1)]),
        (-80, &[(3, 1), (6, 1)]),
        (-100, &[(4, 1), (5, 1)]),
    ]),
    ((5, 5), &[
        (2400, &[(2, 1), (5, 1), (1, 3)]),
        (-1350, &[(2, 2), (5, 1), (1, 1)]),
        (600, &[(3, 1), (5, 1), (2, 1)]),
        (300, &[(1, 1), (7, 1), (2, 1)]),
        (-900, &[(6, 1), (2, 1), (1, 2)]),
        (-1200, &[(3, 1), (5, 1), (1, 2)]),
        (400, &[(1, 1), (6, 1), (3, 1)]),
        (3000, &[(3, 1), (4, 1), (1, 3)]),
        (5100, &[(1, 2), (2, 2), (4, 1)]),
        (12300, &[(1, 5), (2, 1), (3, 1)]),
        (5700, &[(1, 2), (2, 1), (3, 2)]),
        (4400, &[(1, 1), (2, 3), (3, 1)]),
        (400, &[(1, 4), (6, 1)]),
        (-15000, &[(1, 3), (2, 2), (3, 1)]),
        (-5750, &[(1, 4), (2, 1), (4, 1)]),
        (-200, &[(1, 3), (7, 1)]),
        (500, &[(1, 1), (4, 1), (5, 1)]),
        (225, &[(6, 1), (2, 2)]),
        (-675, &[(4, 2), (1, 2)]),
        (-3250, &[(1, 4), (3, 2)]),
        (-625, &[(2, 3), (4, 1)]),
        (350, &[(3, 2), (4, 1)]),
        (-600, &[(1, 1), (3, 3)]),
        (-1050, &[(2, 2), (3, 2)]),
        (-2800, &[(3, 1), (1, 7)]),
        (-11550, &[(1, 6), (2, 2)]),
        (-3300, &[(3, 1), (4, 1), (1, 1), (2, 1)]),
        (-800, &[(5, 1), (1, 5)]),
        (325, &[(4, 2), (2, 1)]),
        (-4375, &[(1, 2), (2, 4)]),
        (-630, &[(1, 10)]),
        (100, &[(8, 1), (1, 2)]),
        (-75, &[(5, 2)]),
        (255, &[(2, 5)]),
        (12000, &[(1, 4), (2, 3)]),
        (4550, &[(1, 8), (2, 1)]),
        (1550, &[(1, 6), (4, 1)]),
        (25, &[(10, 1)]),
        (-50, &[(1, 1), (9, 1)]),
        (-75, &[(2, 1), (8, 1)]),
        (-100, &[(3, 1), (7, 1)]),
        (-125, &[(4, 1), (6, 1)]),
    ]),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{null_wishart_moments, sample_moments};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn stilde_identity(c: f64, order: usize) -> Vec<f64> {
        null_wishart_moments(1.0, c, order).iter().map(|m| c * m).collect()
    }

    #[test]
    fn identity_moments_give_zero_covariance() {
        let q = second_order_covariances(&[1.0; 10], 5, Field::Real).unwrap();
        assert!(q.matrix().iter().all(|&v| v.abs() < 1e-9), "{}", q.matrix());
    }

    #[test]
    fn leading_entries_match_closed_forms() {
        let a = [0.7, 1.3, 2.9, 7.1];
        let q = second_order_covariances(&a, 2, Field::Real).unwrap();
        assert_relative_eq!(q.entry(1, 1), 2.0 * (a[1] - a[0] * a[0]), max_relative = 1e-13);
        let q12 = 2.0 * a[0].powi(3) + 2.0 * a[2] - 4.0 * a[0] * a[1];
        assert_relative_eq!(q.entry(1, 2), 2.0 * q12, max_relative = 1e-13);
        let q22 = 4.0 * a[3] - 8.0 * a[0] * a[2] - 6.0 * a[1] * a[1] + 16.0 * a[1] * a[0] * a[0] - 6.0 * a[0].powi(4);
        assert_relative_eq!(q.entry(2, 2), 2.0 * q22, max_relative = 1e-13);
        assert_eq!(q.entry(1, 2), q.entry(2, 1));
    }

    #[test]
    fn trace_variance_for_identity_population() {
        for (p, n) in [(80, 80), (40, 160), (300, 100)] {
            let q = q_matrix(&PopulationModel::identity(), p, n, 2, Field::Real).unwrap();
            assert_relative_eq!(q.entry(1, 1), 2.0 * p as f64 / n as f64, max_relative = 1e-13);
        }
    }

    #[test]
    fn null_wishart_matrix() {
        for c in [0.25, 1.0, 3.0] {
            let lambda = 1.0;
            let q = second_order_covariances(&stilde_identity(c, 4), 2, Field::Complex).unwrap();
            assert_relative_eq!(q.entry(1, 1), lambda * lambda * c, max_relative = 1e-13);
            assert_relative_eq!(q.entry(1, 2), 2.0 * (c + 1.0) * c, max_relative = 1e-13);
            assert_relative_eq!(q.entry(2, 2), 2.0 * (2.0 * c * c + 5.0 * c + 2.0) * c, max_relative = 1e-13);
        }
    }

    #[test]
    fn two_block_matrix() {
        let (a, t, c) = (2.0f64, 0.5f64, 0.5f64);
        let theta = PopulationModel::two_block(a, 1.0, t).unwrap();
        let s1 = t * a + (1.0 - t);
        let s2 = t * a * a + (1.0 - t);
        let s3 = t * a.powi(3) + (1.0 - t);
        let s4 = t * a.powi(4) + (1.0 - t);
        let b1 = c * s1;
        let b2 = c * s2 + c * c * s1 * s1;
        let b3 = c * s3 + 3.0 * c * c * s1 * s2 + c.powi(3) * s1.powi(3);
        let b4 = c * s4
            + 4.0 * c * c * s1 * s3
            + 2.0 * c * c * s2 * s2
            + 6.0 * c.powi(3) * s1 * s1 * s2
            + c.powi(4) * s1.powi(4);
        let q = q_matrix(&theta, 40, 80, 2, Field::Real).unwrap();
        assert_relative_eq!(q.entry(1, 1), 2.0 * (b2 - b1 * b1), max_relative = 1e-13);
        assert_relative_eq!(q.entry(1, 2), 2.0 * (2.0 * b1.powi(3) + 2.0 * b3 - 4.0 * b1 * b2), max_relative = 1e-13);
        let q22 = 4.0 * b4 - 8.0 * b1 * b3 - 6.0 * b2 * b2 + 16.0 * b2 * b1 * b1 - 6.0 * b1.powi(4);
        assert_relative_eq!(q.entry(2, 2), 2.0 * q22, max_relative = 1e-13);
        let complex = q_matrix(&theta, 40, 80, 2, Field::Complex).unwrap();
        assert_eq!(complex.matrix() * 2.0, *q.matrix());
    }

    #[test]
    fn oracle_values() {
        let a = [1.1, 2.3, 3.7];
        assert_relative_eq!(
            polynomial_oracle(&a, 2, 1).unwrap(),
            -4.0 * a[0] * a[1] + 2.0 * a[0].powi(3) + 2.0 * a[2],
            max_relative = 1e-15
        );
        assert_eq!(polynomial_oracle(&[1.0; 2], 1, 1).unwrap(), 0.0);
        // 6*5 + 30*1*4 - 42*2 - 18*2*3 + 12 + 24*3 - 12*4
        let ramp: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(polynomial_oracle(&ramp, 3, 2).unwrap(), 30.0 + 120.0 - 84.0 - 108.0 + 12.0 + 72.0 - 48.0);
        assert_eq!(polynomial_oracle(&ramp, 2, 3).unwrap(), polynomial_oracle(&ramp, 3, 2).unwrap());
        assert_eq!(polynomial_oracle(&ramp, 6, 1), Err(FluctuationError::UnsupportedEntry(6, 1)));
        assert!(matches!(polynomial_oracle(&a, 3, 2), Err(FluctuationError::TooFewMoments { .. })));
    }

    #[test]
    fn side_limits() {
        assert_eq!(second_order_covariances(&[1.0; 40], 16, Field::Real), Err(FluctuationError::UnsupportedSide(16)));
        assert_eq!(second_order_covariances(&[1.0; 40], 0, Field::Real), Err(FluctuationError::UnsupportedSide(0)));
        assert!(matches!(
            second_order_covariances(&[1.0; 5], 3, Field::Real),
            Err(FluctuationError::TooFewMoments { .. })
        ));
        let big = second_order_covariances(&stilde_identity(0.5, 30), MAX_SIDE, Field::Real).unwrap();
        assert_eq!(big.side(), MAX_SIDE);
    }

    #[test]
    fn mean_vector_values() {
        let theta = PopulationModel::two_block(2.0, 1.0, 0.5).unwrap();
        for field in [Field::Real, Field::Complex] {
            assert_eq!(mean_vector(&theta, 40, 20, 1, field).unwrap()[0], 40.0 * 1.5);
        }
        let m = mean_vector(&theta, 40, 20, 2, Field::Complex).unwrap();
        assert_relative_eq!(m[1], 40.0 * (2.5 + 2.0 * 1.5 * 1.5), max_relative = 1e-14);
        let m = mean_vector(&PopulationModel::identity(), 50, 50, 2, Field::Real).unwrap();
        assert_relative_eq!(m[1], 50.0 * 2.0 + 1.0, max_relative = 1e-14);
    }

    #[test]
    fn correction_flags() {
        let real = MeanCorrection::new(2.0, 0.5, 4, Field::Real);
        assert_eq!(real.values, vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(real.unmodeled, vec![3, 4]);
        assert!(real.note().unwrap().contains(">= 3"));
        let complex = MeanCorrection::new(2.0, 0.5, 4, Field::Complex);
        assert_eq!(complex.values, vec![0.0; 4]);
        assert!(complex.note().is_none());
        assert!(MeanCorrection::new(2.0, 0.5, 2, Field::Real).note().is_none());
    }

    #[test]
    fn diagonal_grows_for_null_moments() {
        let q = second_order_covariances(&stilde_identity(1.0, 20), 10, Field::Complex).unwrap();
        for j in 1..10 {
            assert!(q.entry(j + 1, j + 1).abs() >= q.entry(j, j).abs());
        }
    }

    #[test]
    fn non_positive_definite_is_reported() {
        // alpha~_2 < alpha~_1^2 makes the (1, 1) variance negative.
        let q = second_order_covariances(&[2.0, 1.0], 1, Field::Real).unwrap();
        assert_eq!(q.cholesky().err(), Some(FluctuationError::NotPositiveDefinite(1)));
    }

    proptest! {
        #[test]
        fn series_engine_matches_table(alpha in prop::collection::vec(0.1f64..3.0, 10)) {
            let q = second_order_covariances(&alpha, 5, Field::Complex).unwrap();
            for i in 1..=5 {
                for j in 1..=5 {
                    let oracle = polynomial_oracle(&alpha, i, j).unwrap();
                    let got = q.entry(i, j);
                    prop_assert!((got - oracle).abs() <= 1e-10 * oracle.abs().max(1e-300), "({}, {}): {} vs {}", i, j, got, oracle);
                }
            }
        }

        #[test]
        fn covariance_is_symmetric_and_psd(
            a1 in 1.2f64..6.0, a2 in 0.2f64..1.1, t in 0.05f64..0.95, c in 0.05f64..4.0, side in 1usize..6
        ) {
            let theta = PopulationModel::two_block(a1, a2, t).unwrap();
            let (st, _) = sample_moments(&crate::moments::population_moments(&theta, 2 * side), c, 2 * side).unwrap();
            let q = second_order_covariances(&st, side, Field::Real).unwrap();
            prop_assert_eq!(q.matrix().transpose(), q.matrix().clone());
            let eig = q.matrix().clone().symmetric_eigenvalues();
            let max = eig.iter().cloned().fold(0.0f64, f64::max);
            prop_assert!(eig.iter().all(|&e| e >= -1e-9 * max), "{:?}", eig);
        }
    }
}
