//! Observables, tomography and gate-quality metrics.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{eig_unchecked, tensor, DensityMatrix, Operator, C64};
use crate::error::{Error, Result};
use crate::system::SpinSystem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: Option<String>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl Provenance {
    pub fn now() -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Self { config_hash: None, timestamp }
    }
}

/// Expectation traces against one swept axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis_name: String,
    pub axis_values: Vec<f64>,
    pub traces: Vec<Trace>,
    pub provenance: Provenance,
}

impl SweepResult {
    pub fn new(axis_name: impl Into<String>, axis_values: Vec<f64>, traces: Vec<Trace>) -> Result<Self> {
        for t in &traces {
            if t.values.len() != axis_values.len() {
                return Err(Error::DimensionMismatch { expected: axis_values.len(), found: t.values.len() });
            }
        }
        Ok(Self { axis_name: axis_name.into(), axis_values, traces, provenance: Provenance::now() })
    }

    /// Builds traces from per-point measurement rows in observable order.
    pub fn from_rows(axis_name: &str, axis_values: Vec<f64>, system: &SpinSystem, rows: Vec<Vec<f64>>) -> Result<Self> {
        let traces = system
            .observables()
            .iter()
            .enumerate()
            .map(|(k, o)| Trace { label: o.label().to_string(), values: rows.iter().map(|r| r[k]).collect() })
            .collect();
        Self::new(axis_name, axis_values, traces)
    }

    pub fn trace(&self, label: &str) -> Option<&[f64]> {
        self.traces.iter().find(|t| t.label == label).map(|t| t.values.as_slice())
    }

    pub fn labels(&self) -> Vec<&str> {
        self.traces.iter().map(|t| t.label.as_str()).collect()
    }

    /// Rows with axis value in [lo, hi].
    pub fn window(&self, lo: f64, hi: f64) -> Self {
        let keep: Vec<usize> = (0..self.axis_values.len())
            .filter(|&i| self.axis_values[i] >= lo && self.axis_values[i] <= hi)
            .collect();
        Self {
            axis_name: self.axis_name.clone(),
            axis_values: keep.iter().map(|&i| self.axis_values[i]).collect(),
            traces: self
                .traces
                .iter()
                .map(|t| Trace { label: t.label.clone(), values: keep.iter().map(|&i| t.values[i]).collect() })
                .collect(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Summary of one DD-gate run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateMetrics {
    pub pseudo_fidelity: f64,
    pub t_pi: f64,
    pub n_pi: usize,
    pub state_fidelity: f64,
    /// Only defined for two-qubit registers.
    pub concurrence_at_half: Option<f64>,
}

/// Tr(ρ·obs).
pub fn expval(rho: &DensityMatrix, obs: &Operator) -> Result<f64> {
    let side = rho.op().side();
    if obs.side() != side {
        return Err(Error::DimensionMismatch { expected: side, found: obs.side() });
    }
    let (r, o) = (rho.op().matrix(), obs.matrix());
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..side {
        for k in 0..side {
            acc += r[(i, k)] * o[(k, i)];
        }
    }
    let scale = obs.max_abs().max(1.0);
    if acc.im.abs() > 1e-10 * scale {
        return Err(Error::NotHermitian { residual: acc.im.abs() / scale });
    }
    Ok(acc.re)
}

/// Tr(2 ρ_ref ρ).
pub fn fluorescence(reference: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    Ok(2.0 * expval(rho, reference.op())?)
}

fn pauli(c: char) -> Result<Operator> {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::i();
    let rows = match c {
        'I' => vec![vec![one, z], vec![z, one]],
        'X' => vec![vec![z, one], vec![one, z]],
        'Y' => vec![vec![z, -i], vec![i, z]],
        'Z' => vec![vec![one, z], vec![z, -one]],
        _ => return Err(Error::InvalidParameter(format!("unknown Pauli factor '{c}'"))),
    };
    Operator::from_rows(&rows)
}

/// Pauli product for a label such as "XZ".
pub fn pauli_operator(label: &str) -> Result<Operator> {
    let factors = label.chars().map(pauli).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Operator> = factors.iter().collect();
    tensor(&refs)
}

/// The 4ⁿ − 1 non-identity Pauli labels in lexicographic IXYZ order.
pub fn pauli_labels(n: usize) -> Vec<String> {
    let letters = ['I', 'X', 'Y', 'Z'];
    (1..4usize.pow(n as u32))
        .map(|mut k| {
            let mut s = vec!['I'; n];
            for slot in s.iter_mut().rev() {
                *slot = letters[k % 4];
                k /= 4;
            }
            s.into_iter().collect()
        })
        .collect()
}

/// Ideal tomography inputs: every Pauli expectation of ρ.
pub fn pauli_expectations(rho: &DensityMatrix) -> Result<BTreeMap<String, f64>> {
    let n = qubit_count(rho.dims())?;
    pauli_labels(n)
        .into_iter()
        .map(|l| {
            let v = expval(rho, &pauli_operator(&l)?)?;
            Ok((l, v))
        })
        .collect()
}

fn qubit_count(dims: &[usize]) -> Result<usize> {
    if let Some(&d) = dims.iter().find(|&&d| d != 2) {
        return Err(Error::UnsupportedDimension(d));
    }
    Ok(dims.len())
}

/// Nearest unit-trace PSD matrix by eigenvalue clipping.
pub fn project_physical(op: &Operator) -> Result<Operator> {
    let herm = DMatrix::from_fn(op.side(), op.side(), |i, j| (op.get(i, j) + op.get(j, i).conj()) * 0.5);
    let (values, v) = eig_unchecked(&herm);
    let clipped: Vec<f64> = values.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidState("reconstruction has no positive spectrum".into()));
    }
    let mut scaled = v.clone();
    for (k, lam) in clipped.iter().enumerate() {
        for z in scaled.column_mut(k).iter_mut() {
            *z *= lam / total;
        }
    }
    Operator::new(scaled * v.adjoint(), op.dims().to_vec())
}

/// Linear inversion from Pauli expectations followed by PSD projection.
pub fn tomography(expectations: &BTreeMap<String, f64>) -> Result<DensityMatrix> {
    let n = expectations
        .keys()
        .next()
        .map(|k| k.chars().count())
        .ok_or_else(|| Error::InvalidParameter("no tomography inputs".into()))?;
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidParameter(format!("tomography supports 2 or 3 qubits, got {n}")));
    }
    let dim = 1usize << n;
    let mut rho = Operator::identity(&vec![2; n]);
    for label in pauli_labels(n) {
        let v = expectations
            .get(&label)
            .ok_or_else(|| Error::InvalidParameter(format!("incomplete observable set: missing {label}")))?;
        rho = &rho + &pauli_operator(&label)?.scaled(*v);
    }
    if expectations.len() != dim * dim - 1 {
        return Err(Error::InvalidParameter(format!(
            "expected {} Pauli expectations, got {}",
            dim * dim - 1,
            expectations.len()
        )));
    }
    let rho = rho.scaled(1.0 / dim as f64);
    DensityMatrix::new(project_physical(&rho)?, "tomography")
}

const PSD_TOL: f64 = 1e-8;

fn psd_sqrt(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let (values, v) = eig_unchecked(m);
    if let Some(&min) = values.first().filter(|&&x| x < -PSD_TOL) {
        return Err(Error::InvalidState(format!("eigenvalue {min:.3e} below zero")));
    }
    let mut scaled = v.clone();
    for (k, lam) in values.iter().enumerate() {
        let r = lam.max(0.0).sqrt();
        for z in scaled.column_mut(k).iter_mut() {
            *z *= r;
        }
    }
    Ok(scaled * v.adjoint())
}

fn hermitian_part(m: DMatrix<C64>) -> DMatrix<C64> {
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Tr√(√ρ σ √ρ), the square root of the Uhlmann fidelity.
pub fn root_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.op().side() != sigma.op().side() {
        return Err(Error::DimensionMismatch { expected: rho.op().side(), found: sigma.op().side() });
    }
    let s = psd_sqrt(rho.op().matrix())?;
    psd_sqrt(sigma.op().matrix())?;
    let inner = hermitian_part(&s * sigma.op().matrix() * &s);
    let (values, _) = eig_unchecked(&inner);
    Ok(values.iter().map(|&x| x.max(0.0).sqrt()).sum::<f64>().min(1.0))
}

/// Uhlmann fidelity (Tr√(√ρ σ √ρ))².
pub fn state_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    Ok(root_fidelity(rho, sigma)?.powi(2))
}

/// Two-qubit concurrence.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.dims() != [2, 2] {
        return Err(Error::InvalidParameter(format!("concurrence needs dims [2, 2], got {:?}", rho.dims())));
    }
    let yy = pauli_operator("YY")?;
    let r = rho.op().matrix();
    let flipped = yy.matrix() * r.conjugate() * yy.matrix();
    let s = psd_sqrt(r)?;
    let (mut values, _) = eig_unchecked(&hermitian_part(&s * flipped * &s));
    // eigenvalues at round-off level would otherwise turn into ~1e-8 after the root
    let floor = 1e-12 * values.iter().cloned().fold(0.0, f64::max);
    values.iter_mut().for_each(|x| *x = if *x > floor { x.sqrt() } else { 0.0 });
    values.sort_by(|a, b| b.total_cmp(a));
    Ok((values[0] - values[1] - values[2] - values[3]).max(0.0))
}

/// Least-squares fit of a + b·cos(2πn/T + φ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationFit {
    /// 2|b| over the observable range, capped at 1.
    pub pseudo_fidelity: f64,
    /// Oscillation period in pulses.
    pub period: f64,
    pub offset: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub rms_residual: f64,
}

impl OscillationFit {
    pub fn eval(&self, n: f64) -> f64 {
        self.offset + self.amplitude * (std::f64::consts::TAU * n / self.period + self.phase).cos()
    }
}

/// Maximum RMS residual, as a fraction of the range, for an accepted fit.
pub const MAX_FIT_RESIDUAL: f64 = 0.15;

fn linear_fit(n: &[f64], y: &[f64], period: f64) -> Option<(f64, f64, f64, f64)> {
    let w = std::f64::consts::TAU / period;
    let a = DMatrix::from_fn(n.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => (w * n[i]).cos(),
        _ => (w * n[i]).sin(),
    });
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    if svd.rank(1e-10 * svd.singular_values.max()) < 3 {
        return None;
    }
    let x = svd.solve(&b, 1e-12).ok()?;
    let resid = &a * &x - &b;
    Some((x[0], x[1], x[2], resid.norm_squared()))
}

/// Fits a Rabi-like oscillation of a trace sampled at pulse counts `n`.
pub fn pseudo_fidelity(n: &[f64], series: &[f64], range: f64) -> Result<OscillationFit> {
    if n.len() != series.len() {
        return Err(Error::DimensionMismatch { expected: n.len(), found: series.len() });
    }
    if n.len() < 5 {
        return Err(Error::Fit(format!("{} samples cannot hold a full period", n.len())));
    }
    if !(range > 0.0) {
        return Err(Error::Fit("observable range must be positive".into()));
    }
    let span = n[n.len() - 1] - n[0];
    let (t_min, t_max) = (2.0, span);
    if t_max <= t_min {
        return Err(Error::Fit("series shorter than one period".into()));
    }
    let grid = 4000;
    let sse = |t: f64| linear_fit(n, series, t).map_or(f64::INFINITY, |f| f.3);
    let mut best = (f64::INFINITY, t_min);
    for k in 0..=grid {
        // uniform in frequency resolves short periods as finely as long ones
        let f = 1.0 / t_max + (1.0 / t_min - 1.0 / t_max) * k as f64 / grid as f64;
        let t = 1.0 / f;
        let e = sse(t);
        if e < best.0 {
            best = (e, t);
        }
    }
    let df = (1.0 / t_min - 1.0 / t_max) / grid as f64;
    let f0 = 1.0 / best.1;
    let (mut lo, mut hi) = ((f0 - df).max(1.0 / t_max), (f0 + df).min(1.0 / t_min));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let a = hi - ratio * (hi - lo);
        let b = lo + ratio * (hi - lo);
        if sse(1.0 / a) < sse(1.0 / b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let period = 2.0 / (lo + hi);
    let (offset, c, s, e) =
        linear_fit(n, series, period).ok_or_else(|| Error::Fit("degenerate design matrix".into()))?;
    let amplitude = c.hypot(s);
    let phase = (-s).atan2(c);
    let rms_residual = (e / n.len() as f64).sqrt();
    if rms_residual > MAX_FIT_RESIDUAL * range {
        return Err(Error::Fit(format!(
            "RMS residual {rms_residual:.4} exceeds {MAX_FIT_RESIDUAL} of range {range} (period {period:.3}, amplitude {amplitude:.4})"
        )));
    }
    Ok(OscillationFit {
        pseudo_fidelity: (2.0 * amplitude / range).min(1.0),
        period,
        offset,
        amplitude,
        phase,
        rms_residual,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Axis position of the sample farthest from the trace median, refined by a
/// parabola through it and its neighbours.
pub fn find_resonance(sweep: &SweepResult, trace_label: &str) -> Result<f64> {
    let y = sweep
        .trace(trace_label)
        .ok_or_else(|| Error::InvalidParameter(format!("no trace named {trace_label}")))?;
    let x = &sweep.axis_values;
    if y.len() < 3 {
        return Err(Error::Fit("need at least three samples".into()));
    }
    let m = median(y);
    let i = (0..y.len()).max_by(|&a, &b| (y[a] - m).abs().total_cmp(&(y[b] - m).abs())).unwrap_or(0);
    if i == 0 || i == y.len() - 1 {
        return Err(Error::Fit(format!("extremum at grid boundary ({} = {})", sweep.axis_name, x[i])));
    }
    let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
    let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    if a == 0.0 || !a.is_finite() {
        return Ok(x1);
    }
    Ok((-b / (2.0 * a)).clamp(x0, x2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineCorrected {
    /// Data minus the fitted baseline, in original units.
    pub residual: Vec<f64>,
    /// Residual rescaled to span [0, 1]; equal to `residual` when it is flat.
    pub normalized: Vec<f64>,
    /// Baseline coefficients in powers of the rescaled axis.
    pub coefficients: Vec<f64>,
    /// Points used by the final fit.
    pub mask: Vec<bool>,
}

fn poly_fit(u: &[f64], y: &[f64], mask: &[bool], order: usize) -> Result<Vec<f64>> {
    let rows: Vec<usize> = (0..u.len()).filter(|&i| mask[i]).collect();
    let a = DMatrix::from_fn(rows.len(), order + 1, |r, j| u[rows[r]].powi(j as i32));
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if rows.len() < order + 1 || svd.rank(1e-12 * smax.max(f64::MIN_POSITIVE)) < order + 1 {
        return Err(Error::Fit("singular baseline fit".into()));
    }
    Ok(svd.solve(&b, 1e-14).map_err(|e| Error::Fit(e.to_string()))?.iter().copied().collect())
}

fn poly_eval(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

/// Removes a polynomial baseline fitted away from resonances.
pub fn baseline_correct(x: &[f64], y: &[f64], order: usize) -> Result<BaselineCorrected> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() <= order + 1 {
        return Err(Error::Fit(format!("{} points cannot constrain an order-{order} baseline", x.len())));
    }
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let u: Vec<f64> = x.iter().map(|&v| if half > 0.0 { (v - mid) / half } else { 0.0 }).collect();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);

    let mut mask = vec![true; x.len()];
    let mut coeffs = poly_fit(&u, y, &mask, order)?;
    for _ in 0..2 {
        let r: Vec<f64> = u.iter().zip(y).map(|(&ui, &yi)| yi - poly_eval(&coeffs, ui)).collect();
        let used: Vec<f64> = r.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
        let mean = used.iter().sum::<f64>() / used.len() as f64;
        let sigma = (used.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / used.len() as f64).sqrt();
        let next: Vec<bool> = r.iter().map(|v| (v - mean).abs() <= 2.0 * sigma + 1e-12 * scale).collect();
        if next.iter().filter(|&&m| m).count() <= order + 1 {
            break;
        }
        mask = next;
        coeffs = poly_fit(&u, y, &mask, order)?;
    }
    let residual: Vec<f64> = u.iter().zip(y).map(|(&ui, &yi)| yi - poly_eval(&coeffs, ui)).collect();
    let (rmin, rmax) = residual.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let normalized = if rmax - rmin > 1e-9 {
        residual.iter().map(|v| (v - rmin) / (rmax - rmin)).collect()
    } else {
        residual.clone()
    };
    Ok(BaselineCorrected { residual, normalized, coefficients: coeffs, mask })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseLawFit {
    pub c: f64,
    /// (T − c/a)/(c/a) per point.
    pub relative_residuals: Vec<f64>,
}

/// Largest accepted relative residual of the T_π = c/azx fit.
pub const MAX_SCALING_RESIDUAL: f64 = 0.10;

/// Least-squares c in T = c/a without a quality gate.
pub fn fit_inverse_law(fits: &[(f64, f64)]) -> Result<InverseLawFit> {
    if fits.iter().any(|&(a, _)| !(a > 0.0)) {
        return Err(Error::Fit("couplings must be positive".into()));
    }
    let num: f64 = fits.iter().map(|(a, t)| t / a).sum();
    let den: f64 = fits.iter().map(|(a, _)| 1.0 / (a * a)).sum();
    if den == 0.0 {
        return Err(Error::Empty);
    }
    let c = num / den;
    let relative_residuals = fits.iter().map(|(a, t)| (t - c / a) / (c / a)).collect();
    Ok(InverseLawFit { c, relative_residuals })
}

/// T_π = c/azx over at least four couplings, rejecting poor fits.
pub fn tpi_scaling(fits: &[(f64, f64)]) -> Result<InverseLawFit> {
    if fits.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 couplings, got {}", fits.len())));
    }
    let fit = fit_inverse_law(fits)?;
    let worst = fit.relative_residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if worst > MAX_SCALING_RESIDUAL {
        return Err(Error::Fit(format!("c = {:.4} but relative residual {worst:.3} exceeds {MAX_SCALING_RESIDUAL}", fit.c)));
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::spin_ops;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn bell() -> DensityMatrix {
        let h = 0.5f64.sqrt();
        DensityMatrix::pure(&[c(h), c(0.0), c(0.0), c(h)], vec![2, 2], "bell").unwrap()
    }

    #[test]
    fn expval_examples() {
        let s = spin_ops(2).unwrap();
        let up = DensityMatrix::basis(&[0], &[2], "up").unwrap();
        assert_eq!(expval(&up, &s.sz).unwrap(), 0.5);
        assert_eq!(expval(&DensityMatrix::maximally_mixed(&[2], "m"), &s.sz).unwrap(), 0.0);
        assert_abs_diff_eq!(expval(&bell(), &pauli_operator("XX").unwrap()).unwrap(), 1.0, epsilon = 1e-14);
        assert!(expval(&bell(), &s.sz).is_err());
    }

    #[test]
    fn fluorescence_examples() {
        let reference = DensityMatrix::product(
            &[&DensityMatrix::basis(&[1], &[3], "0").unwrap(), &DensityMatrix::maximally_mixed(&[2], "m")],
            "ref",
        )
        .unwrap();
        assert_abs_diff_eq!(fluorescence(&reference, &reference).unwrap(), 1.0, epsilon = 1e-14);
        let dark = DensityMatrix::product(
            &[&DensityMatrix::basis(&[2], &[3], "-1").unwrap(), &DensityMatrix::maximally_mixed(&[2], "m")],
            "dark",
        )
        .unwrap();
        assert_eq!(fluorescence(&reference, &dark).unwrap(), 0.0);
    }

    #[test]
    fn pauli_label_order() {
        let l = pauli_labels(2);
        assert_eq!(l.len(), 15);
        assert_eq!(l[0], "IX");
        assert_eq!(l[3], "XI");
        assert_eq!(l[14], "ZZ");
        assert_eq!(pauli_labels(3).len(), 63);
    }

    #[test]
    fn tomography_exact_inputs() {
        let zero = DensityMatrix::basis(&[0, 0], &[2, 2], "00").unwrap();
        let rec = tomography(&pauli_expectations(&zero).unwrap()).unwrap();
        assert!(rec.op().max_abs_diff(zero.op()) < 1e-10);
        let rec = tomography(&pauli_expectations(&bell()).unwrap()).unwrap();
        assert_abs_diff_eq!(concurrence(&rec).unwrap(), 1.0, epsilon = 1e-8);
        let mut missing = pauli_expectations(&zero).unwrap();
        missing.remove("XY");
        assert!(tomography(&missing).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let a = DensityMatrix::basis(&[0], &[2], "0").unwrap();
        let b = DensityMatrix::basis(&[1], &[2], "1").unwrap();
        assert_abs_diff_eq!(state_fidelity(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(state_fidelity(&a, &b).unwrap(), 0.0, epsilon = 1e-12);
        let m = DensityMatrix::maximally_mixed(&[2], "m");
        assert_abs_diff_eq!(state_fidelity(&m, &a).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(root_fidelity(&m, &a).unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn concurrence_examples() {
        assert_abs_diff_eq!(concurrence(&bell()).unwrap(), 1.0, epsilon = 1e-10);
        let prod = DensityMatrix::basis(&[0, 1], &[2, 2], "01").unwrap();
        assert_abs_diff_eq!(concurrence(&prod).unwrap(), 0.0, epsilon = 1e-10);
        assert!(concurrence(&DensityMatrix::maximally_mixed(&[2, 2, 2], "m")).is_err());
    }

    #[test]
    fn pseudo_fidelity_on_exact_cosine() {
        let n: Vec<f64> = (1..=40).map(f64::from).collect();
        let y: Vec<f64> = n.iter().map(|k| 0.5 * (2.0 * PI * k / 24.0).cos()).collect();
        let fit = pseudo_fidelity(&n, &y, 1.0).unwrap();
        assert_abs_diff_eq!(fit.pseudo_fidelity, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.period, 24.0, epsilon = 1e-6);
        let short: Vec<f64> = n[..10].to_vec();
        assert!(pseudo_fidelity(&short, &y[..10], 1.0).is_err());
        assert!(pseudo_fidelity(&n[..3], &y[..3], 1.0).is_err());
    }

    #[test]
    fn pseudo_fidelity_rejects_noise() {
        let n: Vec<f64> = (1..=40).map(f64::from).collect();
        let mut state = 12345u64;
        let y: Vec<f64> = n
            .iter()
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        assert!(matches!(pseudo_fidelity(&n, &y, 1.0), Err(Error::Fit(_))));
    }

    #[test]
    fn resonance_of_symmetric_dip() {
        let x: Vec<f64> = (0..21).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| -1.0 / (1.0 + ((v - 1.0) / 0.2f64).powi(2))).collect();
        let s = SweepResult::new("x", x, vec![Trace { label: "y".into(), values: y }]).unwrap();
        assert_abs_diff_eq!(find_resonance(&s, "y").unwrap(), 1.0, epsilon = 1e-12);
        let edge = SweepResult::new("x", vec![0.0, 1.0, 2.0], vec![Trace { label: "y".into(), values: vec![5.0, 0.0, 0.1] }])
            .unwrap();
        assert!(find_resonance(&edge, "y").is_err());
    }

    #[test]
    fn baseline_examples() {
        let x: Vec<f64> = (0..50).map(|k| k as f64 * 0.02).collect();
        let flat = vec![0.0; 50];
        let out = baseline_correct(&x, &flat, 2).unwrap();
        assert_eq!(out.residual, flat);
        assert_eq!(out.normalized, flat);
        let quad: Vec<f64> = x.iter().map(|v| 0.3 - 0.7 * v + 1.9 * v * v).collect();
        let out = baseline_correct(&x, &quad, 2).unwrap();
        assert!(out.residual.iter().all(|r| r.abs() < 1e-10));
        assert!(baseline_correct(&x[..3], &quad[..3], 2).is_err());
    }

    #[test]
    fn baseline_keeps_lorentzian_depth() {
        let x: Vec<f64> = (0..201).map(|k| 0.30 + k as f64 * 0.0005).collect();
        let dip = |v: f64| -0.4 / (1.0 + ((v - 0.364) / 0.002f64).powi(2));
        let y: Vec<f64> = x.iter().map(|&v| 0.2 + 1.5 * (v - 0.35) - 8.0 * (v - 0.35).powi(2) + dip(v)).collect();
        let out = baseline_correct(&x, &y, 2).unwrap();
        // depth against the median level, for both the corrected data and the bare dip
        let depth = |v: &[f64]| median(v) - v.iter().cloned().fold(f64::INFINITY, f64::min);
        let truth: Vec<f64> = x.iter().map(|&v| dip(v)).collect();
        let (got, want) = (depth(&out.residual), depth(&truth));
        assert!((got - want).abs() / want < 0.02, "{got} vs {want}");
    }

    #[test]
    fn inverse_law() {
        let fits: Vec<(f64, f64)> = [0.05, 0.1, 0.2, 0.35].iter().map(|&a| (a, 0.2 / a)).collect();
        let f = tpi_scaling(&fits).unwrap();
        assert_abs_diff_eq!(f.c, 0.2, epsilon = 1e-14);
        assert!(tpi_scaling(&fits[..3]).is_err());
        let bad = vec![(0.05, 1.0), (0.1, 5.0), (0.2, 1.0), (0.35, 3.0)];
        assert!(tpi_scaling(&bad).is_err());
    }
}
