//! First-order limiting moments of a sample covariance matrix.
//!
//! For a population spectrum with mass-weighted power sums `alpha_j^Sigma`,
//! the moments of `S~ = X'X/n` are a sum over noncrossing partitions grouped
//! by block-size profile:
//!
//! ```text
//! alpha_j^S~ = sum_{i_1 + 2 i_2 + ... + j i_j = j} c^(i_1+...+i_j) prod_k (alpha_k^Sigma)^(i_k) gamma(i)
//! ```
//!
//! where `gamma(i)` counts the noncrossing partitions of `{1..j}` with that
//! profile. The moments of `S` follow from `alpha_j^S~ = c alpha_j^S`.

use std::sync::OnceLock;

use thiserror::Error;

/// Largest moment order the engine supports; partition counts stay inside `u128`.
pub const MAX_ORDER: usize = 30;

const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentError {
    #[error("moment order must be at least 1")]
    ZeroOrder,
    #[error("moment order {order} exceeds the supported maximum {max}")]
    OrderTooLarge { order: usize, max: usize },
    #[error("invalid population model: {0}")]
    InvalidModel(String),
    #[error("aspect ratio must be positive and finite, got {0}")]
    InvalidAspectRatio(f64),
    #[error("partition profile does not satisfy sum k*s(k) = j")]
    InvalidSequence,
    #[error("need {needed} population moments, got {got}")]
    TooFewMoments { needed: usize, got: usize },
}

/// One block of the population spectrum: eigenvalue `magnitude` repeated on
/// a fraction `mass` of the dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub magnitude: f64,
    pub mass: f64,
}

/// Block-structured population spectrum, blocks ordered by strictly
/// decreasing magnitude with masses summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    blocks: Vec<Block>,
}

impl PopulationModel {
    pub fn new(blocks: Vec<Block>) -> Result<Self, MomentError> {
        if blocks.is_empty() {
            return Err(MomentError::InvalidModel("no blocks".into()));
        }
        for b in &blocks {
            if !(b.magnitude.is_finite() && b.magnitude > 0.0) {
                return Err(MomentError::InvalidModel(format!("eigenvalue {} is not positive", b.magnitude)));
            }
            if !(b.mass > 0.0 && b.mass <= 1.0) {
                return Err(MomentError::InvalidModel(format!("mass {} outside (0, 1]", b.mass)));
            }
        }
        if blocks.windows(2).any(|w| w[0].magnitude <= w[1].magnitude) {
            return Err(MomentError::InvalidModel("eigenvalues must be strictly decreasing".into()));
        }
        let total: f64 = blocks.iter().map(|b| b.mass).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(MomentError::InvalidModel(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { blocks })
    }

    /// Builds from `(magnitude, mass)` pairs in any order, merging equal
    /// magnitudes.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self, MomentError> {
        let mut sorted: Vec<(f64, f64)> = pairs.to_vec();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut blocks: Vec<Block> = Vec::with_capacity(sorted.len());
        for (magnitude, mass) in sorted {
            match blocks.last_mut() {
                Some(last) if last.magnitude == magnitude => last.mass += mass,
                _ => blocks.push(Block { magnitude, mass }),
            }
        }
        Self::new(blocks)
    }

    pub fn identity() -> Self {
        Self::scaled_identity(1.0).expect("unit identity is valid")
    }

    pub fn scaled_identity(lambda: f64) -> Result<Self, MomentError> {
        Self::new(vec![Block { magnitude: lambda, mass: 1.0 }])
    }

    /// Two blocks: `upper` on a fraction `mass` of dimensions, `lower` on the rest.
    pub fn two_block(upper: f64, lower: f64, mass: f64) -> Result<Self, MomentError> {
        if mass == 1.0 {
            return Self::scaled_identity(upper);
        }
        Self::new(vec![Block { magnitude: upper, mass }, Block { magnitude: lower, mass: 1.0 - mass }])
    }

    /// Spikes of multiplicity one above a bulk `lambda`, at finite dimension `p`.
    pub fn spiked(spikes: &[f64], lambda: f64, p: usize) -> Result<Self, MomentError> {
        let t = 1.0 / p as f64;
        if spikes.len() >= p {
            return Err(MomentError::InvalidModel("more spikes than dimensions".into()));
        }
        let mut pairs: Vec<(f64, f64)> = spikes.iter().map(|&a| (a, t)).collect();
        pairs.push((lambda, 1.0 - t * spikes.len() as f64));
        Self::from_pairs(&pairs)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Multiplicities `p_l` for dimension `p`, rounded so they sum to `p`.
    pub fn multiplicities(&self, p: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut cum_mass = 0.0;
        let mut assigned = 0usize;
        for b in &self.blocks {
            cum_mass += b.mass;
            let upto = ((cum_mass * p as f64).round() as usize).min(p);
            out.push(upto.saturating_sub(assigned));
            assigned = assigned.max(upto);
        }
        if let Some(last) = out.last_mut() {
            *last += p - assigned;
        }
        out
    }

    /// The `p` population eigenvalues in descending order.
    pub fn eigenvalues(&self, p: usize) -> Vec<f64> {
        self.multiplicities(p)
            .into_iter()
            .zip(&self.blocks)
            .flat_map(|(m, b)| std::iter::repeat_n(b.magnitude, m))
            .collect()
    }
}

/// Moments of `Sigma`, `S` and `S~` up to a common order.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub c: f64,
    pub alpha_sigma: Vec<f64>,
    pub alpha_s: Vec<f64>,
    pub alpha_stilde: Vec<f64>,
}

impl MomentSet {
    pub fn new(model: &PopulationModel, c: f64, max_order: usize) -> Result<Self, MomentError> {
        let alpha_sigma = population_moments(model, max_order);
        let (alpha_stilde, alpha_s) = sample_moments(&alpha_sigma, c, max_order)?;
        Ok(Self { c, alpha_sigma, alpha_s, alpha_stilde })
    }

    pub fn max_order(&self) -> usize {
        self.alpha_s.len()
    }
}

/// Block-size profile of a partition of `{1..j}`: `counts[k-1]` blocks of size `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartitionSequence {
    counts: Vec<u32>,
}

impl PartitionSequence {
    pub fn new(counts: Vec<u32>) -> Result<Self, MomentError> {
        let weight: usize = counts.iter().enumerate().map(|(k, &s)| (k + 1) * s as usize).sum();
        if counts.is_empty() || weight != counts.len() {
            return Err(MomentError::InvalidSequence);
        }
        Ok(Self { counts })
    }

    pub fn order(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn block_count(&self) -> u32 {
        self.counts.iter().sum()
    }
}

/// Every block-size profile of order `j`, i.e. one per integer partition of `j`.
pub fn enumerate_sequences(j: usize) -> Result<Vec<PartitionSequence>, MomentError> {
    check_order(j)?;
    let mut out = Vec::new();
    let mut counts = vec![0u32; j];
    fill_sequences(j, j, &mut counts, &mut out);
    Ok(out)
}

// Chooses how many parts of size `largest` to use, then recurses on smaller sizes.
fn fill_sequences(remaining: usize, largest: usize, counts: &mut [u32], out: &mut Vec<PartitionSequence>) {
    if remaining == 0 {
        out.push(PartitionSequence { counts: counts.to_vec() });
        return;
    }
    if largest == 1 {
        counts[0] = remaining as u32;
        out.push(PartitionSequence { counts: counts.to_vec() });
        counts[0] = 0;
        return;
    }
    for s in 0..=remaining / largest {
        counts[largest - 1] = s as u32;
        fill_sequences(remaining - s * largest, largest - 1, counts, out);
    }
    counts[largest - 1] = 0;
}

/// `j! / (i_1! ... i_j! (j + 1 - sum i)!)`, the number of noncrossing
/// partitions of `{1..j}` with profile `s`.
pub fn multinomial_gamma(s: &PartitionSequence) -> Result<u128, MomentError> {
    let j = s.order();
    check_order(j)?;
    let blocks = s.block_count() as usize;
    // (j+1)! / (i_1! ... i_j! (j+1-m)!) / (j+1), built from binomials so
    // every intermediate stays integral.
    let mut total = 0u128;
    let mut acc = 1u128;
    let parts = s.counts.iter().map(|&c| c as u128).chain(std::iter::once((j + 1 - blocks) as u128));
    for part in parts {
        total += part;
        acc = acc
            .checked_mul(binomial(total, part).ok_or(MomentError::OrderTooLarge { order: j, max: MAX_ORDER })?)
            .ok_or(MomentError::OrderTooLarge { order: j, max: MAX_ORDER })?;
    }
    Ok(acc / (j as u128 + 1))
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut r = 1u128;
    for i in 0..k {
        r = r.checked_mul(n - i)? / (i + 1);
    }
    Some(r)
}

fn check_order(j: usize) -> Result<(), MomentError> {
    if j == 0 {
        return Err(MomentError::ZeroOrder);
    }
    if j > MAX_ORDER {
        return Err(MomentError::OrderTooLarge { order: j, max: MAX_ORDER });
    }
    Ok(())
}

/// Mass-weighted power sums `alpha_j^Sigma = sum_i t_i a_i^j` for `j = 1..=max_order`.
pub fn population_moments(model: &PopulationModel, max_order: usize) -> Vec<f64> {
    (1..=max_order).map(|j| model.blocks.iter().map(|b| b.mass * b.magnitude.powi(j as i32)).sum()).collect()
}

struct ProfileTerm {
    // (moment order k, exponent i_k) for nonzero i_k
    factors: Vec<(usize, i32)>,
    blocks: i32,
    gamma: f64,
}

fn profile_table() -> &'static [Vec<ProfileTerm>] {
    static TABLE: OnceLock<Vec<Vec<ProfileTerm>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (1..=MAX_ORDER)
            .map(|j| {
                enumerate_sequences(j)
                    .expect("order within range")
                    .into_iter()
                    .map(|s| ProfileTerm {
                        factors: s
                            .counts()
                            .iter()
                            .enumerate()
                            .filter(|(_, &n)| n > 0)
                            .map(|(k, &n)| (k + 1, n as i32))
                            .collect(),
                        blocks: s.block_count() as i32,
                        gamma: multinomial_gamma(&s).expect("order within range") as f64,
                    })
                    .collect()
            })
            .collect()
    })
}

/// Returns `(alpha^S~, alpha^S)` for orders `1..=max_order`.
pub fn sample_moments(alpha_sigma: &[f64], c: f64, max_order: usize) -> Result<(Vec<f64>, Vec<f64>), MomentError> {
    if !(c.is_finite() && c > 0.0) {
        return Err(MomentError::InvalidAspectRatio(c));
    }
    if max_order > MAX_ORDER {
        return Err(MomentError::OrderTooLarge { order: max_order, max: MAX_ORDER });
    }
    if alpha_sigma.len() < max_order {
        return Err(MomentError::TooFewMoments { needed: max_order, got: alpha_sigma.len() });
    }
    let table = profile_table();
    let c_pows: Vec<f64> = (0..=max_order).map(|e| c.powi(e as i32)).collect();
    let stilde: Vec<f64> = table[..max_order]
        .iter()
        .map(|terms| {
            terms
                .iter()
                .map(|t| {
                    let prod: f64 = t.factors.iter().map(|&(k, e)| alpha_sigma[k - 1].powi(e)).product();
                    c_pows[t.blocks as usize] * prod * t.gamma
                })
                .sum()
        })
        .collect();
    let s = stilde.iter().map(|v| v / c).collect();
    Ok((stilde, s))
}

/// Moments of a null Wishart matrix with noise level `lambda`:
/// `lambda^k sum_{j<k} c^j N(k, j+1)` with Narayana weights.
pub fn null_wishart_moments(lambda: f64, c: f64, max_order: usize) -> Vec<f64> {
    (1..=max_order)
        .map(|k| {
            let sum: f64 = (0..k).map(|j| c.powi(j as i32) * narayana(k as u64, j as u64)).sum();
            lambda.powi(k as i32) * sum
        })
        .collect()
}

// (1/(j+1)) C(k, j) C(k-1, j)
fn narayana(k: u64, j: u64) -> f64 {
    let b1 = binomial(k as u128, j as u128).expect("small binomial") as f64;
    let b2 = binomial((k - 1) as u128, j as u128).expect("small binomial") as f64;
    b1 * b2 / (j + 1) as f64
}

/// `alpha_j^S` for a single spike `a` of multiplicity one over a unit bulk,
/// plugging the finite-`p` mass `1/p` into the two-block moments.
pub fn spike_moments(a: f64, p: usize, c: f64, max_order: usize) -> Result<Vec<f64>, MomentError> {
    if p < 2 {
        return Err(MomentError::InvalidModel("spiked model needs p >= 2".into()));
    }
    let model = PopulationModel::spiked(&[a], 1.0, p)?;
    Ok(MomentSet::new(&model, c, max_order)?.alpha_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn seq(c: &[u32]) -> PartitionSequence {
        PartitionSequence::new(c.to_vec()).unwrap()
    }

    // Brute force: all vectors in prod_k [0, j/k] with the weighted-sum constraint.
    fn brute_force_count(j: usize) -> usize {
        fn rec(k: usize, j: usize, remaining: usize) -> usize {
            if k > j {
                return usize::from(remaining == 0);
            }
            (0..=remaining / k).map(|s| rec(k + 1, j, remaining - s * k)).sum()
        }
        rec(1, j, j)
    }

    #[test]
    fn sequence_counts() {
        assert_eq!(enumerate_sequences(1).unwrap(), vec![seq(&[1])]);
        assert_eq!(enumerate_sequences(4).unwrap().len(), 5);
        assert_eq!(enumerate_sequences(6).unwrap().len(), brute_force_count(6));
        assert_eq!(brute_force_count(6), 11);
        assert_eq!(enumerate_sequences(0), Err(MomentError::ZeroOrder));
        let partition_numbers = [1, 2, 3, 5, 7, 11, 15, 22, 30, 42, 56, 77];
        for (j, &pj) in partition_numbers.iter().enumerate() {
            let seqs = enumerate_sequences(j + 1).unwrap();
            assert_eq!(seqs.len(), pj);
            let unique: std::collections::HashSet<_> = seqs.iter().collect();
            assert_eq!(unique.len(), pj);
            assert!(seqs.iter().all(|s| s.block_count() as usize <= j + 1));
        }
    }

    #[test]
    fn gamma_values() {
        assert_eq!(multinomial_gamma(&seq(&[1, 1, 0])).unwrap(), 3);
        assert_eq!(multinomial_gamma(&seq(&[2, 1, 0, 0])).unwrap(), 6);
        assert_eq!(multinomial_gamma(&seq(&[0, 0, 0, 1])).unwrap(), 1);
        assert_eq!(multinomial_gamma(&seq(&[0, 2, 0, 0])).unwrap(), 2);
        assert_eq!(multinomial_gamma(&seq(&[1, 0, 1, 0])).unwrap(), 4);
    }

    #[test]
    fn gamma_sums_to_catalan() {
        let mut catalan = 1u128;
        for j in 1..=MAX_ORDER {
            // C_j = C_{j-1} * 2(2j-1)/(j+1)
            catalan = catalan * 2 * (2 * j as u128 - 1) / (j as u128 + 1);
            let total: u128 = enumerate_sequences(j).unwrap().iter().map(|s| multinomial_gamma(s).unwrap()).sum();
            assert_eq!(total, catalan, "j = {j}");
        }
    }

    #[test]
    fn population_moment_values() {
        let id = PopulationModel::identity();
        assert!(population_moments(&id, 6).iter().all(|&a| a == 1.0));
        let m = PopulationModel::two_block(2.0, 1.0, 0.5).unwrap();
        assert_eq!(population_moments(&m, 2), vec![1.5, 2.5]);
    }

    #[test]
    fn sample_moment_values() {
        let (st, s) = sample_moments(&[1.0; 3], 0.5, 3).unwrap();
        assert_relative_eq!(st[2], 1.375, max_relative = 1e-15);
        assert_relative_eq!(s[2], 2.75, max_relative = 1e-15);
        for c in [0.1, 0.7, 3.0] {
            let (_, s) = sample_moments(&[1.0; 2], c, 2).unwrap();
            assert_relative_eq!(s[1], 1.0 + c, max_relative = 1e-15);
        }
        assert_eq!(sample_moments(&[1.0], 0.0, 1), Err(MomentError::InvalidAspectRatio(0.0)));
        assert_eq!(sample_moments(&[1.0], 1.0, 2), Err(MomentError::TooFewMoments { needed: 2, got: 1 }));
    }

    #[test]
    fn null_wishart_values() {
        let w = null_wishart_moments(2.0, 0.3, 3);
        assert_relative_eq!(w[0], 2.0);
        assert_relative_eq!(w[1], 4.0 * 1.3, max_relative = 1e-15);
        assert_eq!(null_wishart_moments(1.0, 1.0, 3)[2], 5.0);
    }

    #[test]
    fn spike_values() {
        let m = spike_moments(10.0, 10, 1.0, 2).unwrap();
        assert_relative_eq!(m[0], 1.9, max_relative = 1e-14);
        let (a, p, c) = (10.0f64, 10.0f64, 1.0f64);
        let closed =
            (a * a * p - 2.0 * p * c + c - 2.0 * a * c + c * p * p + p * p - p + 2.0 * p * a * c + a * a * c) / (p * p);
        assert_relative_eq!(m[1], closed, max_relative = 1e-14);

        let flat = spike_moments(1.0, 12, 0.4, 8).unwrap();
        for (x, y) in flat.iter().zip(null_wishart_moments(1.0, 0.4, 8)) {
            assert_relative_eq!(*x, y, max_relative = 1e-13);
        }
        assert!(spike_moments(2.0, 1, 1.0, 2).is_err());
    }

    #[test]
    fn model_validation() {
        let b = |magnitude, mass| Block { magnitude, mass };
        assert!(PopulationModel::new(vec![b(1.0, 0.5), b(2.0, 0.5)]).is_err());
        assert!(PopulationModel::new(vec![b(2.0, 0.5), b(1.0, 0.4)]).is_err());
        assert!(PopulationModel::new(vec![b(2.0, 0.0), b(1.0, 1.0)]).is_err());
        assert!(PopulationModel::new(vec![b(-1.0, 1.0)]).is_err());
        assert!(PopulationModel::new(vec![]).is_err());
        let merged = PopulationModel::from_pairs(&[(1.0, 0.25), (3.0, 0.5), (1.0, 0.25)]).unwrap();
        assert_eq!(merged.blocks(), &[b(3.0, 0.5), b(1.0, 0.5)]);
    }

    #[test]
    fn multiplicities_sum_to_dimension() {
        let m = PopulationModel::two_block(2.0, 1.0, 0.5).unwrap();
        assert_eq!(m.multiplicities(80), vec![40, 40]);
        assert_eq!(m.multiplicities(9), vec![5, 4]);
        let s = PopulationModel::spiked(&[10.0], 1.0, 40).unwrap();
        assert_eq!(s.multiplicities(40), vec![1, 39]);
        assert_eq!(s.eigenvalues(40)[..2], [10.0, 1.0]);
    }

    proptest! {
        #[test]
        fn identity_population_matches_null_wishart(c in prop::sample::select(vec![0.1, 0.5, 1.0, 2.0])) {
            let (_, s) = sample_moments(&[1.0; 10], c, 10).unwrap();
            for (x, y) in s.iter().zip(null_wishart_moments(1.0, c, 10)) {
                prop_assert!(((x - y) / y).abs() <= 1e-12);
            }
        }

        #[test]
        fn population_moments_increase_with_each_magnitude(
            a1 in 1.5f64..5.0, a2 in 0.2f64..1.4, t in 0.05f64..0.95, j in 1usize..8
        ) {
            let base = population_moments(&PopulationModel::two_block(a1, a2, t).unwrap(), j)[j - 1];
            let h = 1e-6;
            let up1 = population_moments(&PopulationModel::two_block(a1 + h, a2, t).unwrap(), j)[j - 1];
            let up2 = population_moments(&PopulationModel::two_block(a1, a2 + h, t).unwrap(), j)[j - 1];
            prop_assert!(up1 > base);
            prop_assert!(up2 > base);
        }
    }
}
