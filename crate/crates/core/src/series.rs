//! Truncated power series in one and two variables.
//!
//! Coefficients are stored as `f64`. A univariate series with degree cap `D`
//! carries `c_0..c_D`; a bivariate series with cap `D` carries every
//! coefficient `(i, j)` with `i + j <= D` inside a `(D+1) x (D+1)` grid, the
//! entries beyond the total-degree cap being identically zero.
//!
//! Division by `(x - y)` is never done by polynomial long division. For a
//! series `N(x, y)` that vanishes on the diagonal, the quotient `R = N/(x-y)`
//! satisfies `r[a][b] = sum_{m=0..=b} n[a+1+m][b-m]`, which is exact and only
//! loses one degree of validity.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("degree caps differ: {left} vs {right}")]
    CapMismatch { left: usize, right: usize },
    #[error("series has a zero constant term and cannot be inverted")]
    ZeroConstantTerm,
    #[error("divided difference needs H(0) = 0, got constant term {0}")]
    NonzeroConstantTerm(f64),
    #[error("coefficient ({i}, {j}) is outside degree cap {cap}")]
    IndexOutOfRange { i: usize, j: usize, cap: usize },
    #[error("series coefficients must be finite")]
    NonFinite,
    #[error("a series needs at least one coefficient")]
    Empty,
}

/// Power series `c_0 + c_1 x + ... + c_D x^D + O(x^{D+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries {
    coeffs: Vec<f64>,
}

impl TruncatedSeries {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, SeriesError> {
        if coeffs.is_empty() {
            return Err(SeriesError::Empty);
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(SeriesError::NonFinite);
        }
        Ok(Self { coeffs })
    }

    pub fn zero(cap: usize) -> Self {
        Self { coeffs: vec![0.0; cap + 1] }
    }

    pub fn one(cap: usize) -> Self {
        let mut s = Self::zero(cap);
        s.coeffs[0] = 1.0;
        s
    }

    pub fn degree_cap(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `x^d`; zero beyond the cap.
    pub fn coeff(&self, d: usize) -> f64 {
        self.coeffs.get(d).copied().unwrap_or(0.0)
    }

    fn check_cap(&self, other: &Self) -> Result<(), SeriesError> {
        if self.degree_cap() != other.degree_cap() {
            return Err(SeriesError::CapMismatch { left: self.degree_cap(), right: other.degree_cap() });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_cap(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(Self { coeffs })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_cap(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(Self { coeffs })
    }

    pub fn scale(&self, k: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * k).collect() }
    }

    /// Cauchy product truncated at the common cap.
    pub fn mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_cap(other)?;
        let cap = self.degree_cap();
        // Terms i and d-i are paired and summed outside-in so that a*b and
        // b*a round identically.
        let (a, b) = (&self.coeffs, &other.coeffs);
        let out = (0..=cap)
            .map(|d| {
                let mut acc = 0.0;
                for i in 0..d.div_ceil(2) {
                    acc += a[i] * b[d - i] + a[d - i] * b[i];
                }
                if d % 2 == 0 {
                    acc += a[d / 2] * b[d / 2];
                }
                acc
            })
            .collect();
        Ok(Self { coeffs: out })
    }

    /// Termwise derivative. The top coefficient of the result is zero since
    /// the information needed for it lies beyond the cap.
    pub fn derivative(&self) -> Self {
        let cap = self.degree_cap();
        let mut out: Vec<f64> = (1..=cap).map(|d| d as f64 * self.coeffs[d]).collect();
        out.push(0.0);
        Self { coeffs: out }
    }

    /// Multiplicative inverse up to the cap.
    pub fn reciprocal(&self) -> Result<Self, SeriesError> {
        let a0 = self.coeffs[0];
        if a0 == 0.0 {
            return Err(SeriesError::ZeroConstantTerm);
        }
        let cap = self.degree_cap();
        let mut g = vec![0.0; cap + 1];
        g[0] = 1.0 / a0;
        for n in 1..=cap {
            let acc: f64 = (1..=n).map(|i| self.coeffs[i] * g[n - i]).sum();
            g[n] = -acc / a0;
        }
        Ok(Self { coeffs: g })
    }

    /// `D(x, y) = (H(x) - H(y)) / (x - y)` for `H(0) = 0`, with
    /// `coeff(i, j) = h_{i+j+1}`. The result has total-degree cap `D - 1`
    /// (cap 0 for a constant-cap input).
    pub fn divided_difference(&self) -> Result<BivariateSeries, SeriesError> {
        if self.coeffs[0] != 0.0 {
            return Err(SeriesError::NonzeroConstantTerm(self.coeffs[0]));
        }
        let cap = self.degree_cap().saturating_sub(1);
        Ok(BivariateSeries::from_fn(cap, |i, j| self.coeff(i + j + 1)))
    }

    /// Evaluate the truncated polynomial at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Series in `x` and `y`, truncated at total degree `cap`.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateSeries {
    cap: usize,
    grid: Vec<f64>,
}

impl BivariateSeries {
    pub fn zero(cap: usize) -> Self {
        Self { cap, grid: vec![0.0; (cap + 1) * (cap + 1)] }
    }

    pub fn one(cap: usize) -> Self {
        let mut s = Self::zero(cap);
        s.grid[0] = 1.0;
        s
    }

    /// Builds from a coefficient function; `f` is only consulted for `i + j <= cap`.
    pub fn from_fn(cap: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut s = Self::zero(cap);
        for i in 0..=cap {
            for j in 0..=cap - i {
                s.grid[i * (cap + 1) + j] = f(i, j);
            }
        }
        s
    }

    /// `a(x) * b(y)`, truncated at the smaller of the two caps.
    pub fn outer(a: &TruncatedSeries, b: &TruncatedSeries) -> Self {
        let cap = a.degree_cap().min(b.degree_cap());
        Self::from_fn(cap, |i, j| a.coeff(i) * b.coeff(j))
    }

    pub fn degree_cap(&self) -> usize {
        self.cap
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.grid[i * (self.cap + 1) + j]
    }

    /// Grid entry `(i, j)`: the coefficient of `x^i y^j`.
    pub fn coeff(&self, i: usize, j: usize) -> Result<f64, SeriesError> {
        if i > self.cap || j > self.cap {
            return Err(SeriesError::IndexOutOfRange { i, j, cap: self.cap });
        }
        Ok(self.at(i, j))
    }

    fn check_cap(&self, other: &Self) -> Result<(), SeriesError> {
        if self.cap != other.cap {
            return Err(SeriesError::CapMismatch { left: self.cap, right: other.cap });
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_cap(other)?;
        let grid = self.grid.iter().zip(&other.grid).map(|(a, b)| a - b).collect();
        Ok(Self { cap: self.cap, grid })
    }

    pub fn scale(&self, k: f64) -> Self {
        Self { cap: self.cap, grid: self.grid.iter().map(|c| c * k).collect() }
    }

    /// Drops every coefficient of total degree above `cap` (which must not
    /// exceed the current cap).
    pub fn truncate(&self, cap: usize) -> Self {
        assert!(cap <= self.cap, "cannot raise the cap by truncation");
        Self::from_fn(cap, |i, j| self.at(i, j))
    }

    pub fn mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_cap(other)?;
        let cap = self.cap;
        let side = cap + 1;
        let mut out = vec![0.0; side * side];
        for i1 in 0..=cap {
            for j1 in 0..=cap - i1 {
                let a = self.grid[i1 * side + j1];
                if a == 0.0 {
                    continue;
                }
                let rest = cap - i1 - j1;
                for i2 in 0..=rest {
                    let row_out = (i1 + i2) * side + j1;
                    let row_b = i2 * side;
                    for j2 in 0..=rest - i2 {
                        out[row_out + j2] += a * other.grid[row_b + j2];
                    }
                }
            }
        }
        Ok(Self { cap, grid: out })
    }

    /// Newton iteration `g <- g (2 - a g)` seeded with `1 / a_00`; each step
    /// doubles the number of correct total degrees.
    pub fn reciprocal(&self) -> Result<Self, SeriesError> {
        let a00 = self.at(0, 0);
        if a00 == 0.0 {
            return Err(SeriesError::ZeroConstantTerm);
        }
        let steps = newton_steps(self.cap);
        let mut g = Self::zero(self.cap);
        g.grid[0] = 1.0 / a00;
        let two = Self::one(self.cap).scale(2.0);
        for _ in 0..steps {
            let ag = self.mul(&g)?;
            g = g.mul(&two.sub(&ag)?)?;
        }
        Ok(g)
    }

    /// Exact quotient by `(x - y)` of a series vanishing on `x = y`. The
    /// result has cap one lower than the input.
    pub fn divide_by_difference(&self) -> Self {
        let cap = self.cap.saturating_sub(1);
        Self::from_fn(cap, |a, b| (0..=b).map(|m| self.at(a + 1 + m, b - m)).sum())
    }

    /// `S(x, x)` as a univariate series.
    pub fn diagonal(&self) -> TruncatedSeries {
        let mut coeffs = vec![0.0; self.cap + 1];
        for i in 0..=self.cap {
            for j in 0..=self.cap - i {
                coeffs[i + j] += self.at(i, j);
            }
        }
        TruncatedSeries { coeffs }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..=self.cap).all(|i| (0..=self.cap - i).all(|j| (self.at(i, j) - self.at(j, i)).abs() <= tol))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut total = 0.0;
        for i in (0..=self.cap).rev() {
            let row: f64 = (0..=self.cap - i).rev().fold(0.0, |acc, j| acc * y + self.at(i, j));
            total = total * x + row;
        }
        total
    }
}

fn newton_steps(cap: usize) -> usize {
    // ceil(log2(cap + 1)) + 1
    let n = cap + 1;
    (usize::BITS - (n - 1).leading_zeros()) as usize + 1
}
