//! Dense operators on multi-subsystem Hilbert spaces.

use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const HERMITIAN_TOL: f64 = 1e-10;

/// Square complex matrix tagged with the dimensions of its subsystems.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
    dims: Vec<usize>,
}

impl Operator {
    pub fn new(mat: DMatrix<C64>, dims: Vec<usize>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::NotSquare { rows: mat.nrows(), cols: mat.ncols() });
        }
        if dims.is_empty() {
            return Err(Error::Empty);
        }
        let side: usize = dims.iter().product();
        if side != mat.nrows() {
            return Err(Error::DimensionMismatch { expected: side, found: mat.nrows() });
        }
        Ok(Self { mat, dims })
    }

    /// Single-subsystem operator from a square matrix.
    pub fn single(mat: DMatrix<C64>) -> Result<Self> {
        let d = mat.nrows();
        Self::new(mat, vec![d])
    }

    /// Builds a single-subsystem operator from row-major entries.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::NotSquare { rows: n, cols: r.len() });
        }
        Self::single(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_real_diagonal(values: &[f64], dims: Vec<usize>) -> Result<Self> {
        let n = values.len();
        let mut mat = DMatrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            mat[(i, i)] = C64::new(*v, 0.0);
        }
        Self::new(mat, dims)
    }

    pub fn identity(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self { mat: DMatrix::identity(n, n), dims: dims.to_vec() }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self { mat: DMatrix::zeros(n, n), dims: dims.to_vec() }
    }

    /// Projector |idx⟩⟨idx| on a single subsystem of dimension `d`.
    pub fn projector(d: usize, idx: usize) -> Result<Self> {
        if idx >= d {
            return Err(Error::SiteOutOfRange { site: idx, sites: d });
        }
        let mut mat = DMatrix::zeros(d, d);
        mat[(idx, idx)] = C64::new(1.0, 0.0);
        Self::single(mat)
    }

    pub fn side(&self) -> usize {
        self.mat.nrows()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.mat[(row, col)]
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<C64> {
        let n = self.side();
        (0..n * n).map(|k| self.mat[(k / n, k % n)]).collect()
    }

    /// Same matrix, relabelled with a different subsystem split.
    pub fn with_dims(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(self.mat, dims)
    }

    pub fn adjoint(&self) -> Self {
        Self { mat: self.mat.adjoint(), dims: self.dims.clone() }
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// max|A − B| over entries.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// max|H − H†| relative to max|H|; zero for the zero matrix.
    pub fn hermiticity_residual(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let n = self.side();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst / scale
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_residual() <= tol
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { mat: &self.mat * C64::new(factor, 0.0), dims: self.dims.clone() }
    }

    pub fn scaled_complex(&self, factor: C64) -> Self {
        Self { mat: &self.mat * factor, dims: self.dims.clone() }
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        &(self * other) - &(other * self)
    }

    /// max|U†U − 1|.
    pub fn unitarity_residual(&self) -> f64 {
        let p = self.mat.adjoint() * &self.mat;
        let n = self.side();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p[(i, j)] - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    fn check_same_side(&self, other: &Operator) -> Result<()> {
        if self.side() != other.side() {
            return Err(Error::DimensionMismatch { expected: self.side(), found: other.side() });
        }
        Ok(())
    }

    pub fn checked_mul(&self, other: &Operator) -> Result<Self> {
        self.check_same_side(other)?;
        Ok(self * other)
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        Operator { mat: &self.mat * &rhs.mat, dims: self.dims.clone() }
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator { mat: &self.mat + &rhs.mat, dims: self.dims.clone() }
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        Operator { mat: &self.mat - &rhs.mat, dims: self.dims.clone() }
    }
}

/// Spin matrices for one subsystem.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub sx: Operator,
    pub sy: Operator,
    pub sz: Operator,
}

/// Spin-(d−1)/2 matrices with `sz` ordered by descending projection.
pub fn spin_ops(d: usize) -> Result<SpinOperators> {
    if d != 2 && d != 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    let j = (d as f64 - 1.0) / 2.0;
    let m = |k: usize| j - k as f64;
    // raising operator: ⟨m+1|S+|m⟩ = sqrt(j(j+1) − m(m+1)), row k−1 ← column k
    let mut plus = DMatrix::<C64>::zeros(d, d);
    for k in 1..d {
        let mk = m(k);
        plus[(k - 1, k)] = C64::new((j * (j + 1.0) - mk * (mk + 1.0)).sqrt(), 0.0);
    }
    let minus = plus.adjoint();
    let sx = (&plus + &minus) * C64::new(0.5, 0.0);
    let sy = (&plus - &minus) * C64::new(0.0, -0.5);
    let sz = DMatrix::from_fn(d, d, |r, c| if r == c { C64::new(m(r), 0.0) } else { C64::new(0.0, 0.0) });
    Ok(SpinOperators {
        sx: Operator::single(sx)?,
        sy: Operator::single(sy)?,
        sz: Operator::single(sz)?,
    })
}

/// Kronecker product in the given order, concatenating subsystem dimensions.
pub fn tensor(factors: &[&Operator]) -> Result<Operator> {
    let (first, rest) = factors.split_first().ok_or(Error::Empty)?;
    let mut mat = first.mat.clone();
    let mut dims = first.dims.clone();
    for f in rest {
        mat = mat.kronecker(&f.mat);
        dims.extend_from_slice(&f.dims);
    }
    Ok(Operator { mat, dims })
}

/// Places a single-subsystem operator at `site`, identity elsewhere.
pub fn embed(op: &Operator, site: usize, dims: &[usize]) -> Result<Operator> {
    if site >= dims.len() {
        return Err(Error::SiteOutOfRange { site, sites: dims.len() });
    }
    if op.side() != dims[site] {
        return Err(Error::DimensionMismatch { expected: dims[site], found: op.side() });
    }
    let before: usize = dims[..site].iter().product();
    let after: usize = dims[site + 1..].iter().product();
    let mat = DMatrix::<C64>::identity(before, before)
        .kronecker(&op.mat)
        .kronecker(&DMatrix::<C64>::identity(after, after));
    Ok(Operator { mat, dims: dims.to_vec() })
}

/// Eigen-decomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Operator,
}

impl Spectrum {
    /// exp(−i2π·t·H) from the cached decomposition.
    pub fn propagator(&self, duration: f64) -> Result<Operator> {
        if duration < 0.0 {
            return Err(Error::NegativeDuration(duration));
        }
        Ok(Operator {
            mat: phase_conjugate(&self.vectors.mat, &self.values, duration),
            dims: self.vectors.dims.clone(),
        })
    }
}

fn phase_conjugate(v: &DMatrix<C64>, values: &[f64], duration: f64) -> DMatrix<C64> {
    let mut scaled = v.clone();
    for (k, lam) in values.iter().enumerate() {
        let phase = C64::from_polar(1.0, -std::f64::consts::TAU * duration * lam);
        for z in scaled.column_mut(k).iter_mut() {
            *z *= phase;
        }
    }
    scaled * v.adjoint()
}

pub fn eig_hermitian(h: &Operator) -> Result<Spectrum> {
    let residual = h.hermiticity_residual();
    if residual > HERMITIAN_TOL {
        return Err(Error::NotHermitian { residual });
    }
    let (values, vectors) = eig_unchecked(&h.mat);
    Ok(Spectrum { values, vectors: Operator { mat: vectors, dims: h.dims.clone() } })
}

pub(crate) fn eig_unchecked(h: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(h.nrows(), h.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// exp(−i2π·t·H) for a matrix known to be Hermitian.
pub(crate) fn expm_step(h: &DMatrix<C64>, duration: f64) -> DMatrix<C64> {
    let (values, vectors) = eig_unchecked(h);
    phase_conjugate(&vectors, &values, duration)
}

/// exp(−i2π·duration·h).
pub fn herm_propagator(h: &Operator, duration: f64) -> Result<Operator> {
    if duration < 0.0 {
        return Err(Error::NegativeDuration(duration));
    }
    eig_hermitian(h)?.propagator(duration)
}

/// Unit-trace, Hermitian, positive semidefinite operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
    label: String,
}

impl DensityMatrix {
    pub fn new(op: Operator, label: impl Into<String>) -> Result<Self> {
        let tr = op.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let herm = op.hermiticity_residual() * op.max_abs();
        if herm > 1e-10 {
            return Err(Error::InvalidState(format!("Hermiticity residual {herm:.3e}")));
        }
        let (values, _) = eig_unchecked(&op.mat);
        if let Some(min) = values.first().filter(|&&v| v < -1e-9) {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { op, label: label.into() })
    }

    /// Skips validation; callers guarantee the state came from a unitary image of a valid state.
    pub(crate) fn trusted(op: Operator, label: impl Into<String>) -> Self {
        Self { op, label: label.into() }
    }

    /// |ψ⟩⟨ψ| for a normalized state vector.
    pub fn pure(amplitudes: &[C64], dims: Vec<usize>, label: impl Into<String>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let n = amplitudes.len();
        let mat = DMatrix::from_fn(n, n, |i, j| amplitudes[i] * amplitudes[j].conj() / (norm * norm));
        Self::new(Operator::new(mat, dims)?, label)
    }

    /// Computational basis state with one index per subsystem.
    pub fn basis(indices: &[usize], dims: &[usize], label: impl Into<String>) -> Result<Self> {
        if indices.len() != dims.len() {
            return Err(Error::DimensionMismatch { expected: dims.len(), found: indices.len() });
        }
        let factors = indices
            .iter()
            .zip(dims)
            .map(|(&i, &d)| Operator::projector(d, i))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Operator> = factors.iter().collect();
        Self::new(tensor(&refs)?, label)
    }

    pub fn maximally_mixed(dims: &[usize], label: impl Into<String>) -> Self {
        let n: usize = dims.iter().product();
        Self { op: Operator::identity(dims).scaled(1.0 / n as f64), label: label.into() }
    }

    pub fn product(parts: &[&DensityMatrix], label: impl Into<String>) -> Result<Self> {
        let ops: Vec<&Operator> = parts.iter().map(|p| &p.op).collect();
        Ok(Self { op: tensor(&ops)?, label: label.into() })
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn dims(&self) -> &[usize] {
        self.op.dims()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn purity(&self) -> f64 {
        (&self.op * &self.op).trace().re
    }

    /// U ρ U†.
    pub fn evolve(&self, u: &Operator) -> Result<Self> {
        if u.side() != self.op.side() {
            return Err(Error::DimensionMismatch { expected: self.op.side(), found: u.side() });
        }
        Ok(Self::trusted(conjugate(u, &self.op), self.label.clone()))
    }
}

pub(crate) fn conjugate(u: &Operator, rho: &Operator) -> Operator {
    Operator { mat: &u.mat * &rho.mat * u.mat.adjoint(), dims: rho.dims.clone() }
}

/// Reduced state on the sites in `keep`, kept in original order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let dims = rho.dims();
    if keep.is_empty() {
        return Err(Error::Empty);
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&s| s >= dims.len()) {
        return Err(Error::SiteOutOfRange { site: bad, sites: dims.len() });
    }
    let kept_dims: Vec<usize> = kept.iter().map(|&s| dims[s]).collect();
    let out_side: usize = kept_dims.iter().product();
    let n = rho.op.side();

    // split every full index into (kept index, traced index)
    let split: Vec<(usize, usize)> = (0..n)
        .map(|mut idx| {
            let mut digits = vec![0; dims.len()];
            for s in (0..dims.len()).rev() {
                digits[s] = idx % dims[s];
                idx /= dims[s];
            }
            let (mut k, mut t) = (0, 0);
            for (s, &d) in dims.iter().enumerate() {
                if kept.binary_search(&s).is_ok() {
                    k = k * d + digits[s];
                } else {
                    t = t * d + digits[s];
                }
            }
            (k, t)
        })
        .collect();

    let mut out = DMatrix::<C64>::zeros(out_side, out_side);
    for r in 0..n {
        for c in 0..n {
            if split[r].1 == split[c].1 {
                out[(split[r].0, split[c].0)] += rho.op.mat[(r, c)];
            }
        }
    }
    Ok(DensityMatrix::trusted(Operator::new(out, kept_dims)?, rho.label.clone()))
}
