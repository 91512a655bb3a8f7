//! Parameter vectors `(t_1..t_{k-1}, a_1..a_k)` with known and unknown entries,
//! and the unconstrained coordinates the optimizer works in.
//!
//! Magnitudes are decoded from the smallest up. A free `a_i` sits above the
//! already-decoded `a_{i+1}` (or zero): either `lo + exp(u)` when nothing
//! fixed lies above it, or `lo + (hi - lo) * sigmoid(u)` where `hi` is the
//! nearest fixed magnitude above. Free masses share whatever mass the fixed
//! ones leave through an additive log-ratio against the implicit `t_k`.

use crate::moments::{Block, PopulationModel};

use super::InferenceError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Param {
    Free(f64),
    Fixed(f64),
}

impl Param {
    pub fn value(self) -> f64 {
        match self {
            Param::Free(v) | Param::Fixed(v) => v,
        }
    }

    pub fn is_free(self) -> bool {
        matches!(self, Param::Free(_))
    }

    fn with_value(self, v: f64) -> Self {
        match self {
            Param::Free(_) => Param::Free(v),
            Param::Fixed(_) => Param::Fixed(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector {
    masses: Vec<Param>,
    magnitudes: Vec<Param>,
}

impl ThetaVector {
    /// `masses` holds `t_1..t_{k-1}`; the last block takes the remainder.
    pub fn new(masses: Vec<Param>, magnitudes: Vec<Param>) -> Result<Self, InferenceError> {
        if magnitudes.is_empty() || masses.len() + 1 != magnitudes.len() {
            return Err(InferenceError::InvalidTheta(format!(
                "{} masses for {} magnitudes",
                masses.len(),
                magnitudes.len()
            )));
        }
        let theta = Self { masses, magnitudes };
        theta.to_model()?;
        if theta.fixed_mass() >= 1.0 && theta.masses.iter().any(|m| m.is_free()) {
            return Err(InferenceError::InvalidTheta("fixed masses leave nothing for the free ones".into()));
        }
        Ok(theta)
    }

    /// Every entry free, starting from `model`.
    pub fn all_free(model: &PopulationModel) -> Self {
        Self::from_model(model, |_| true, |_| true)
    }

    /// Takes values from `model`; `free_mass(i)` and `free_magnitude(i)` mark
    /// which zero-based entries are unknown.
    pub fn from_model(
        model: &PopulationModel,
        free_mass: impl Fn(usize) -> bool,
        free_magnitude: impl Fn(usize) -> bool,
    ) -> Self {
        let blocks = model.blocks();
        let wrap = |free: bool, v: f64| if free { Param::Free(v) } else { Param::Fixed(v) };
        let masses = blocks[..blocks.len() - 1].iter().enumerate().map(|(i, b)| wrap(free_mass(i), b.mass)).collect();
        let magnitudes = blocks.iter().enumerate().map(|(i, b)| wrap(free_magnitude(i), b.magnitude)).collect();
        Self { masses, magnitudes }
    }

    /// `k` free blocks at magnitudes `k, k-1, ..., 1` with equal masses.
    pub fn free_blocks(k: usize) -> Self {
        let pairs: Vec<(f64, f64)> = (0..k).map(|i| ((k - i) as f64, 1.0 / k as f64)).collect();
        let model = PopulationModel::from_pairs(&pairs).expect("k >= 1");
        Self::all_free(&model)
    }

    pub fn k(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn masses(&self) -> &[Param] {
        &self.masses
    }

    pub fn magnitudes(&self) -> &[Param] {
        &self.magnitudes
    }

    /// Values in layout order `(t_1..t_{k-1}, a_1..a_k)`.
    pub fn layout(&self) -> Vec<f64> {
        self.masses.iter().chain(&self.magnitudes).map(|p| p.value()).collect()
    }

    pub fn free_dim(&self) -> usize {
        self.masses.iter().chain(&self.magnitudes).filter(|p| p.is_free()).count()
    }

    pub fn smallest_is_free(&self) -> bool {
        self.magnitudes.last().is_some_and(|p| p.is_free())
    }

    /// Fewest trace powers that identify the free entries.
    pub fn min_q(&self) -> usize {
        (self.free_dim() + usize::from(self.smallest_is_free())).max(1)
    }

    fn fixed_mass(&self) -> f64 {
        self.masses.iter().filter(|m| !m.is_free()).map(|m| m.value()).sum()
    }

    pub fn to_model(&self) -> Result<PopulationModel, InferenceError> {
        let last = 1.0 - self.masses.iter().map(|m| m.value()).sum::<f64>();
        let blocks = self
            .magnitudes
            .iter()
            .zip(self.masses.iter().map(|m| m.value()).chain(std::iter::once(last)))
            .map(|(a, t)| Block { magnitude: a.value(), mass: t })
            .collect();
        Ok(PopulationModel::new(blocks)?)
    }

    fn fixed_above(&self, i: usize) -> Option<f64> {
        self.magnitudes[..i].iter().rev().find(|p| !p.is_free()).map(|p| p.value())
    }

    /// Unconstrained coordinates of the free entries: masses first, then
    /// magnitudes from the smallest up.
    pub fn encode(&self) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.free_dim());
        let t_last = 1.0 - self.masses.iter().map(|m| m.value()).sum::<f64>();
        for m in &self.masses {
            if m.is_free() {
                u.push((m.value() / t_last).ln());
            }
        }
        let k = self.k();
        let mut lo: f64 = 0.0;
        for i in (0..k).rev() {
            let a = self.magnitudes[i];
            if a.is_free() {
                u.push(match self.fixed_above(i) {
                    None => (a.value() - lo).ln(),
                    Some(hi) => logit((a.value() - lo) / (hi - lo)),
                });
            }
            lo = a.value();
        }
        u
    }

    /// Inverse of [`ThetaVector::encode`], keeping the free/fixed pattern.
    pub fn decode(&self, u: &[f64]) -> Self {
        debug_assert_eq!(u.len(), self.free_dim());
        let mut it = u.iter().copied();
        let free_masses = self.masses.iter().filter(|m| m.is_free()).count();
        let remaining = 1.0 - self.fixed_mass();
        let masses = if free_masses == 0 {
            self.masses.clone()
        } else {
            let logs: Vec<f64> = (0..free_masses).map(|_| it.next().unwrap()).collect();
            // Softmax against the implicit last block, shifted for stability.
            let shift = logs.iter().copied().fold(0.0, f64::max);
            let denom = (-shift).exp() + logs.iter().map(|l| (l - shift).exp()).sum::<f64>();
            let mut free_values = logs.iter().map(|l| remaining * (l - shift).exp() / denom);
            self.masses
                .iter()
                .map(|m| if m.is_free() { m.with_value(free_values.next().unwrap()) } else { *m })
                .collect()
        };
        let k = self.k();
        let mut magnitudes = self.magnitudes.clone();
        let mut lo: f64 = 0.0;
        for i in (0..k).rev() {
            if magnitudes[i].is_free() {
                let ui = it.next().unwrap();
                let v = match self.fixed_above(i) {
                    None => lo + ui.exp(),
                    Some(hi) => lo + (hi - lo) * sigmoid(ui),
                };
                magnitudes[i] = Param::Free(v);
            }
            lo = magnitudes[i].value();
        }
        Self { masses, magnitudes }
    }

    /// Coordinates for `values` (layout order) after nudging them into the
    /// feasible region; used for starting points that may violate ordering.
    pub fn encode_projected(&self, values: &[f64]) -> Vec<f64> {
        let k = self.k();
        let mut masses = self.masses.clone();
        let remaining = 1.0 - self.fixed_mass();
        let free_masses = masses.iter().filter(|m| m.is_free()).count();
        if free_masses > 0 {
            let floor = 0.02 * remaining / (free_masses + 1) as f64;
            let mut proposed: Vec<f64> =
                masses.iter().enumerate().filter(|(_, m)| m.is_free()).map(|(i, _)| values[i].max(floor)).collect();
            let total: f64 = proposed.iter().sum();
            if total > remaining - floor {
                let s = (remaining - floor) / total;
                proposed.iter_mut().for_each(|v| *v *= s);
            }
            let mut it = proposed.into_iter();
            for m in masses.iter_mut().filter(|m| m.is_free()) {
                *m = m.with_value(it.next().unwrap());
            }
        }
        let mut magnitudes = self.magnitudes.clone();
        let mut lo: f64 = 0.0;
        for i in (0..k).rev() {
            if magnitudes[i].is_free() {
                let want = values[k - 1 + i];
                let v = match self.fixed_above(i) {
                    None => want.max(lo + 0.02 * lo.max(0.05)),
                    Some(hi) => want.clamp(lo + 0.02 * (hi - lo), hi - 0.02 * (hi - lo)),
                };
                magnitudes[i] = Param::Free(v);
            }
            lo = magnitudes[i].value();
        }
        Self { masses, magnitudes }.encode()
    }
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}
