//! Seeded Monte Carlo sampling of Wishart sample covariance matrices.
//!
//! Every trial draws from its own ChaCha substream keyed by `(seed, trial)`,
//! so results do not depend on thread count or scheduling.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::moments::PopulationModel;
use crate::Field;

pub type C64 = Complex<f64>;

const HERMITIAN_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("need at least one sample column")]
    NoSamples,
    #[error("dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rotation {
    Identity,
    Haar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSpec {
    pub p: usize,
    pub n: usize,
    pub field: Field,
    pub seed: u64,
    pub rotation: Rotation,
}

impl SampleSpec {
    pub fn new(p: usize, n: usize, field: Field, seed: u64) -> Self {
        Self { p, n, field, seed, rotation: Rotation::Identity }
    }

    pub fn with_rotation(mut self, rotation: Rotation) -> Self {
        self.rotation = rotation;
        self
    }

    /// Generator for trial `trial` of this spec.
    pub fn rng(&self, trial: u64) -> ChaCha8Rng {
        trial_rng(self.seed, trial)
    }
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// A real or complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldMatrix {
    Real(DMatrix<f64>),
    Complex(DMatrix<C64>),
}

impl FieldMatrix {
    pub fn field(&self) -> Field {
        match self {
            FieldMatrix::Real(_) => Field::Real,
            FieldMatrix::Complex(_) => Field::Complex,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            FieldMatrix::Real(m) => m.shape(),
            FieldMatrix::Complex(m) => m.shape(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.shape().0
    }

    pub fn ncols(&self) -> usize {
        self.shape().1
    }

    /// First `k` columns.
    pub fn leading_columns(&self, k: usize) -> Self {
        match self {
            FieldMatrix::Real(m) => FieldMatrix::Real(m.columns(0, k).into_owned()),
            FieldMatrix::Complex(m) => FieldMatrix::Complex(m.columns(0, k).into_owned()),
        }
    }

    /// `A B'` (conjugate transpose) scaled by `k`.
    fn scaled_outer(&self, k: f64) -> Self {
        match self {
            FieldMatrix::Real(m) => FieldMatrix::Real((m * m.transpose()) * k),
            FieldMatrix::Complex(m) => FieldMatrix::Complex((m * m.adjoint()).map(|z| z * k)),
        }
    }

    /// `A' A` scaled by `k`.
    fn scaled_gram(&self, k: f64) -> Self {
        match self {
            FieldMatrix::Real(m) => FieldMatrix::Real((m.transpose() * m) * k),
            FieldMatrix::Complex(m) => FieldMatrix::Complex((m.adjoint() * m).map(|z| z * k)),
        }
    }

    /// `U' A U` for a square `A`.
    pub fn conjugate_by(&self, u: &FieldMatrix) -> Self {
        match (self, u) {
            (FieldMatrix::Real(a), FieldMatrix::Real(u)) => FieldMatrix::Real(u.transpose() * a * u),
            (FieldMatrix::Complex(a), FieldMatrix::Complex(u)) => FieldMatrix::Complex(u.adjoint() * a * u),
            (FieldMatrix::Real(a), FieldMatrix::Complex(u)) => {
                FieldMatrix::Complex(u.adjoint() * a.map(|x| C64::new(x, 0.0)) * u)
            }
            (FieldMatrix::Complex(a), FieldMatrix::Real(u)) => {
                let uc = u.map(|x| C64::new(x, 0.0));
                FieldMatrix::Complex(uc.adjoint() * a * uc)
            }
        }
    }

    /// Real parts of the diagonal.
    pub fn diagonal(&self) -> Vec<f64> {
        match self {
            FieldMatrix::Real(m) => m.diagonal().iter().copied().collect(),
            FieldMatrix::Complex(m) => m.diagonal().iter().map(|z| z.re).collect(),
        }
    }

    fn hermitian_deviation(&self) -> Result<f64, LabError> {
        let (r, c) = self.shape();
        if r != c {
            return Err(LabError::NotSquare(r, c));
        }
        let (dev, scale) = match self {
            FieldMatrix::Real(m) => ((m - m.transpose()).amax(), m.amax()),
            FieldMatrix::Complex(m) => {
                let d = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
                (d, m.iter().map(|z| z.norm()).fold(0.0, f64::max))
            }
        };
        Ok(dev / scale.max(1.0))
    }

    /// Eigenvalues of a Hermitian matrix, descending.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>, LabError> {
        let dev = self.hermitian_deviation()?;
        if dev > HERMITIAN_TOL {
            return Err(LabError::NotHermitian(dev));
        }
        let mut eig: Vec<f64> = match self {
            FieldMatrix::Real(m) => SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect(),
            FieldMatrix::Complex(m) => SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect(),
        };
        eig.sort_by(|a, b| b.total_cmp(a));
        Ok(eig)
    }

    /// Largest deviation of `A'A` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        match self {
            FieldMatrix::Real(m) => (m.transpose() * m - DMatrix::identity(m.ncols(), m.ncols())).amax(),
            FieldMatrix::Complex(m) => {
                (m.adjoint() * m - DMatrix::identity(m.ncols(), m.ncols())).iter().map(|z| z.norm()).fold(0.0, f64::max)
            }
        }
    }
}

/// Trace powers `Tr S^j`, `j = 1..=q`, of one sample covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStats {
    pub p: usize,
    pub n: usize,
    pub field: Field,
    pub trace_powers: Vec<f64>,
    /// All `p` sample eigenvalues in descending order, when known.
    pub eigenvalues: Option<Vec<f64>>,
}

impl TraceStats {
    pub fn from_eigenvalues(p: usize, n: usize, field: Field, eigenvalues: Vec<f64>, q_max: usize) -> Self {
        let trace_powers = power_sums(&eigenvalues, q_max);
        Self { p, n, field, trace_powers, eigenvalues: Some(eigenvalues) }
    }

    /// Statistics of `(1/k) X_k X_k'` where `X_k` is the first `k` columns of `x`.
    ///
    /// Eigenvalues come from whichever of `X X'` and `X' X` is smaller; the
    /// missing ones are exact zeros.
    pub fn from_data(x: &FieldMatrix, k: usize, q_max: usize) -> Result<Self, LabError> {
        if k == 0 || k > x.ncols() {
            return Err(LabError::NoSamples);
        }
        let p = x.nrows();
        let xk = if k == x.ncols() { x.clone() } else { x.leading_columns(k) };
        let small = if p <= k { xk.scaled_outer(1.0 / k as f64) } else { xk.scaled_gram(1.0 / k as f64) };
        let mut eig = small.hermitian_eigenvalues()?;
        eig.resize(p, 0.0);
        Ok(Self::from_eigenvalues(p, k, x.field(), eig, q_max))
    }

    pub fn q_max(&self) -> usize {
        self.trace_powers.len()
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    /// `Tr S^j` for one-based `j`.
    pub fn trace(&self, j: usize) -> f64 {
        self.trace_powers[j - 1]
    }
}

fn power_sums(eig: &[f64], q_max: usize) -> Vec<f64> {
    let mut sums = vec![0.0; q_max];
    for &l in eig {
        let mut pow = 1.0;
        for s in sums.iter_mut() {
            pow *= l;
            *s += pow;
        }
    }
    sums
}

/// Trace powers of a Hermitian matrix via its eigenvalues.
pub fn trace_powers(s: &FieldMatrix, n: usize, q_max: usize) -> Result<TraceStats, LabError> {
    let eig = s.hermitian_eigenvalues()?;
    Ok(TraceStats::from_eigenvalues(s.nrows(), n, s.field(), eig, q_max))
}

fn gaussian_matrix(rows: usize, cols: usize, field: Field, rng: &mut impl Rng) -> FieldMatrix {
    match field {
        Field::Real => FieldMatrix::Real(DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))),
        Field::Complex => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            FieldMatrix::Complex(DMatrix::from_fn(rows, cols, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re * s, im * s)
            }))
        }
    }
}

/// Haar-distributed orthogonal (real) or unitary (complex) `p x p` matrix.
pub fn haar_rotation(p: usize, field: Field, rng: &mut impl Rng) -> FieldMatrix {
    match gaussian_matrix(p, p, field, rng) {
        FieldMatrix::Real(g) => {
            let qr = g.qr();
            let r = qr.r();
            let mut q = qr.q();
            for (j, mut col) in q.column_iter_mut().enumerate() {
                if r[(j, j)] < 0.0 {
                    col.neg_mut();
                }
            }
            FieldMatrix::Real(q)
        }
        FieldMatrix::Complex(g) => {
            let qr = g.qr();
            let r = qr.r();
            let mut q = qr.q();
            for (j, mut col) in q.column_iter_mut().enumerate() {
                let d = r[(j, j)];
                let norm = d.norm();
                if norm > 0.0 {
                    col *= d / norm;
                }
            }
            FieldMatrix::Complex(q)
        }
    }
}

/// `p x n` observations with covariance `U diag(eigenvalues) U'`.
pub fn sample_data(model: &PopulationModel, spec: &SampleSpec, trial: u64) -> FieldMatrix {
    let mut rng = spec.rng(trial);
    let sqrt_eig: Vec<f64> = model.eigenvalues(spec.p).iter().map(|a| a.sqrt()).collect();
    let rotation = match spec.rotation {
        Rotation::Identity => None,
        Rotation::Haar => Some(haar_rotation(spec.p, spec.field, &mut rng)),
    };
    let z = gaussian_matrix(spec.p, spec.n, spec.field, &mut rng);
    let scale = DVector::from_vec(sqrt_eig);
    match (z, rotation) {
        (FieldMatrix::Real(mut z), rot) => {
            for (mut row, s) in z.row_iter_mut().zip(scale.iter()) {
                row *= *s;
            }
            match rot {
                Some(FieldMatrix::Real(u)) => FieldMatrix::Real(u * z),
                _ => FieldMatrix::Real(z),
            }
        }
        (FieldMatrix::Complex(mut z), rot) => {
            for (mut row, s) in z.row_iter_mut().zip(scale.iter()) {
                row *= C64::new(*s, 0.0);
            }
            match rot {
                Some(FieldMatrix::Complex(u)) => FieldMatrix::Complex(u * z),
                _ => FieldMatrix::Complex(z),
            }
        }
    }
}

/// The rotation `sample_data` applies in `trial`, if any.
pub fn sample_rotation(spec: &SampleSpec, trial: u64) -> Option<FieldMatrix> {
    match spec.rotation {
        Rotation::Identity => None,
        Rotation::Haar => Some(haar_rotation(spec.p, spec.field, &mut spec.rng(trial))),
    }
}

/// `S = (1/n) X X'`.
pub fn scm(x: &FieldMatrix) -> Result<FieldMatrix, LabError> {
    if x.ncols() == 0 {
        return Err(LabError::NoSamples);
    }
    Ok(x.scaled_outer(1.0 / x.ncols() as f64))
}

/// Draws one sample covariance matrix for `spec` (trial 0).
pub fn sample_scm(model: &PopulationModel, spec: &SampleSpec) -> FieldMatrix {
    scm(&sample_data(model, spec, 0)).expect("spec has samples")
}

/// Number of columns in the held-out test matrix, `ceil(n / 2)`.
pub fn split_count(n: usize) -> usize {
    n.div_ceil(2)
}

/// `(1/m) sum_{i <= m} x_i x_i'` over the first `m = ceil(n/2)` columns.
pub fn split_scm(x: &FieldMatrix) -> Result<FieldMatrix, LabError> {
    if x.ncols() == 0 {
        return Err(LabError::NoSamples);
    }
    scm(&x.leading_columns(split_count(x.ncols())))
}

/// Runs `f(trial, rng)` for every trial in parallel, returning results in
/// trial order.
pub fn monte_carlo<T, F>(trials: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> T + Sync,
{
    (0..trials as u64).into_par_iter().map(|trial| f(trial, &mut trial_rng(seed, trial))).collect()
}

/// Full-sample and split-sample trace statistics for each trial.
pub fn simulate_traces(model: &PopulationModel, spec: &SampleSpec, trials: usize, q_max: usize) -> Vec<TraceStats> {
    (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let x = sample_data(model, spec, trial);
            TraceStats::from_data(&x, spec.n, q_max).expect("sampled matrix is Hermitian")
        })
        .collect()
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header and rows `trial,p,n,beta,seed,tr1..trq`.
pub fn write_trace_csv<W: Write>(mut out: W, seed: u64, rows: &[TraceStats]) -> io::Result<()> {
    let q = rows.iter().map(|r| r.q_max()).max().unwrap_or(0);
    let mut header = String::from("trial,p,n,beta,seed");
    for j in 1..=q {
        write!(header, ",tr{j}").unwrap();
    }
    writeln!(out, "{header}")?;
    for (trial, r) in rows.iter().enumerate() {
        let mut line = format!("{trial},{},{},{},{seed}", r.p, r.n, r.field.beta());
        for t in &r.trace_powers {
            line.push(',');
            line.push_str(&fmt_f64(*t));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Parses the output of [`write_trace_csv`].
pub fn read_trace_csv<R: BufRead>(input: R) -> Result<Vec<TraceStats>, LabError> {
    let mut rows = Vec::new();
    let mut lines = input.lines().enumerate().filter(|(_, l)| !l.as_ref().is_ok_and(|l| l.starts_with('#')));
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(LabError::Parse { line: 1, msg: "empty input".into() }),
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 6 || cols[..5] != ["trial", "p", "n", "beta", "seed"] {
        return Err(LabError::Parse { line: 1, msg: "expected header trial,p,n,beta,seed,tr1,...".into() });
    }
    for (idx, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| LabError::Parse { line: idx + 1, msg };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(err(format!("expected {} fields, got {}", cols.len(), fields.len())));
        }
        let int = |s: &str| s.trim().parse::<usize>().map_err(|e| err(format!("{s:?}: {e}")));
        let (p, n, beta) = (int(fields[1])?, int(fields[2])?, int(fields[3])?);
        let field = u8::try_from(beta)
            .ok()
            .and_then(Field::from_beta)
            .ok_or_else(|| err(format!("beta must be 1 or 2, got {beta}")))?;
        if p == 0 || n == 0 {
            return Err(err("p and n must be positive".into()));
        }
        let trace_powers = fields[5..]
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| err(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(TraceStats { p, n, field, trace_powers, eigenvalues: None });
    }
    Ok(rows)
}

fn parse_complex(tok: &str) -> Option<C64> {
    let tok = tok.trim();
    let Some(body) = tok.strip_suffix('i') else {
        return tok.parse::<f64>().ok().map(|re| C64::new(re, 0.0));
    };
    // Split at the last sign that is not part of an exponent.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'))?;
    let re = body[..split].parse::<f64>().ok()?;
    let im = match &body[split..] {
        "+" => 1.0,
        "-" => -1.0,
        s => s.parse::<f64>().ok()?,
    };
    Some(C64::new(re, im))
}

/// Reads a data matrix stored one row per line, columns as samples. Any
/// cell written `re+imi` makes the whole matrix complex.
pub fn read_data_csv<R: BufRead>(input: R) -> Result<FieldMatrix, LabError> {
    let mut cells: Vec<Vec<String>> = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if let Some(first) = cells.first() {
            if first.len() != row.len() {
                return Err(LabError::Parse {
                    line: idx + 1,
                    msg: format!("expected {} columns, got {}", first.len(), row.len()),
                });
            }
        }
        cells.push(row);
    }
    if cells.is_empty() {
        return Err(LabError::NoSamples);
    }
    let (p, n) = (cells.len(), cells[0].len());
    let complex = cells.iter().flatten().any(|c| c.ends_with('i'));
    let bad = |r: usize, c: &str| LabError::Parse { line: r + 1, msg: format!("invalid number {c:?}") };
    if complex {
        let mut m = DMatrix::zeros(p, n);
        for (r, row) in cells.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                m[(r, c)] = parse_complex(cell).ok_or_else(|| bad(r, cell))?;
            }
        }
        Ok(FieldMatrix::Complex(m))
    } else {
        let mut m = DMatrix::zeros(p, n);
        for (r, row) in cells.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                m[(r, c)] = cell.parse::<f64>().map_err(|_| bad(r, cell))?;
            }
        }
        Ok(FieldMatrix::Real(m))
    }
}

pub fn write_data_csv<W: Write>(mut out: W, x: &FieldMatrix) -> io::Result<()> {
    let (p, n) = x.shape();
    for r in 0..p {
        let row: Vec<String> = (0..n)
            .map(|c| match x {
                FieldMatrix::Real(m) => fmt_f64(m[(r, c)]),
                FieldMatrix::Complex(m) => {
                    let z = m[(r, c)];
                    let sign = if z.im.is_sign_negative() { "" } else { "+" };
                    format!("{}{sign}{}i", fmt_f64(z.re), fmt_f64(z.im))
                }
            })
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trace_powers_of_simple_matrices() {
        let id = FieldMatrix::Real(DMatrix::identity(5, 5));
        let t = trace_powers(&id, 5, 4).unwrap();
        assert!(t.trace_powers.iter().all(|&v| (v - 5.0).abs() < 1e-12));
        let d = FieldMatrix::Real(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0])));
        let t = trace_powers(&d, 2, 2).unwrap();
        assert_relative_eq!(t.trace(1), 6.0, max_relative = 1e-14);
        assert_relative_eq!(t.trace(2), 20.0, max_relative = 1e-14);
        assert_eq!(t.eigenvalues.unwrap(), vec![4.0, 2.0]);
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = FieldMatrix::Real(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]));
        assert!(matches!(trace_powers(&m, 2, 2), Err(LabError::NotHermitian(_))));
        let m = FieldMatrix::Real(DMatrix::zeros(2, 3));
        assert!(matches!(trace_powers(&m, 2, 2), Err(LabError::NotSquare(2, 3))));
    }

    #[test]
    fn frobenius_check() {
        for field in [Field::Real, Field::Complex] {
            let spec = SampleSpec::new(30, 20, field, 9);
            let s = sample_scm(&PopulationModel::two_block(3.0, 1.0, 0.3).unwrap(), &spec);
            let frob = match &s {
                FieldMatrix::Real(m) => m.norm_squared(),
                FieldMatrix::Complex(m) => m.norm_squared(),
            };
            let t = trace_powers(&s, 20, 2).unwrap();
            assert_relative_eq!(t.trace(2), frob, max_relative = 1e-8);
        }
    }

    #[test]
    fn split_counts() {
        assert_eq!(split_count(10), 5);
        assert_eq!(split_count(9), 5);
        assert_eq!(split_count(1), 1);
        let x = FieldMatrix::Real(DMatrix::from_fn(3, 9, |r, c| (r * 9 + c) as f64));
        let s = split_scm(&x).unwrap();
        let manual = x.leading_columns(5);
        assert_eq!(s, scm(&manual).unwrap());
        assert!(split_scm(&FieldMatrix::Real(DMatrix::zeros(3, 0))).is_err());
    }

    #[test]
    fn haar_is_unitary() {
        let mut rng = trial_rng(3, 0);
        for field in [Field::Real, Field::Complex] {
            for p in [1, 2, 17] {
                let u = haar_rotation(p, field, &mut rng);
                assert!(u.unitarity_defect() < 1e-10);
            }
        }
        if let FieldMatrix::Real(u) = haar_rotation(1, Field::Real, &mut rng) {
            assert_eq!(u[(0, 0)].abs(), 1.0);
        }
    }

    #[test]
    fn gram_and_outer_agree() {
        for field in [Field::Real, Field::Complex] {
            let spec = SampleSpec::new(12, 5, field, 1);
            let x = sample_data(&PopulationModel::identity(), &spec, 0);
            let via_gram = TraceStats::from_data(&x, 5, 4).unwrap();
            let via_full = trace_powers(&scm(&x).unwrap(), 5, 4).unwrap();
            for (a, b) in via_gram.trace_powers.iter().zip(&via_full.trace_powers) {
                assert_relative_eq!(a, b, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn complex_tokens() {
        assert_eq!(parse_complex("1.5+2i"), Some(C64::new(1.5, 2.0)));
        assert_eq!(parse_complex("-1e-3-2.5e+1i"), Some(C64::new(-1e-3, -25.0)));
        assert_eq!(parse_complex("3"), Some(C64::new(3.0, 0.0)));
        assert_eq!(parse_complex("2-i"), Some(C64::new(2.0, -1.0)));
        assert_eq!(parse_complex("abc"), None);
    }
}
