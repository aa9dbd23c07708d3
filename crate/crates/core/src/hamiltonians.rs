//! Static and driven Hamiltonians for the generic and NV models.

use serde::{Deserialize, Serialize};

use crate::algebra::{eig_hermitian, embed, spin_ops, Operator};
use crate::error::{Error, Result};
use crate::evolution::{pulse_propagator, SimConfig};
use crate::system::SpinSystem;

/// Electron–target coupling, either the single zx term or a full tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coupling {
    Scalar { azx: f64 },
    Tensor { tensor: [[f64; 3]; 3] },
}

impl Coupling {
    /// Size of the zx element, used by the weak-coupling check.
    pub fn zx(&self) -> f64 {
        match self {
            Coupling::Scalar { azx } => *azx,
            Coupling::Tensor { tensor } => tensor[2][0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetQubit {
    pub omega0: f64,
    #[serde(flatten)]
    pub coupling: Coupling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericSystemParams {
    pub omega00: f64,
    pub targets: Vec<TargetQubit>,
    /// Require |azx| ≤ ω0 for every target (the weak-coupling regime).
    #[serde(default)]
    pub weak_coupling: bool,
}

impl GenericSystemParams {
    /// Central qubit with scalar-coupled targets given as (ω0, azx) pairs.
    pub fn scalar(omega00: f64, targets: &[(f64, f64)]) -> Self {
        Self {
            omega00,
            targets: targets
                .iter()
                .map(|&(omega0, azx)| TargetQubit { omega0, coupling: Coupling::Scalar { azx } })
                .collect(),
            weak_coupling: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega00 > 0.0) {
            return Err(Error::InvalidParameter(format!("omega00 must be positive, got {}", self.omega00)));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidParameter("at least one target qubit is required".into()));
        }
        for (j, t) in self.targets.iter().enumerate() {
            if !t.omega0.is_finite() {
                return Err(Error::InvalidParameter(format!("target {}: omega0 not finite", j + 1)));
            }
            if self.weak_coupling && t.coupling.zx().abs() > t.omega0.abs() {
                return Err(Error::InvalidParameter(format!(
                    "target {}: |azx| = {} exceeds omega0 = {}",
                    j + 1,
                    t.coupling.zx().abs(),
                    t.omega0
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![2; 1 + self.targets.len()]
    }
}

/// ω00 Sz + Σj [ω0j Iz,j + coupling_j].
pub fn generic_h0(params: &GenericSystemParams) -> Result<Operator> {
    params.validate()?;
    let dims = params.dims();
    let s = spin_ops(2)?;
    let central = [embed(&s.sx, 0, &dims)?, embed(&s.sy, 0, &dims)?, embed(&s.sz, 0, &dims)?];
    let mut h = central[2].scaled(params.omega00);
    for (j, t) in params.targets.iter().enumerate() {
        let site = j + 1;
        let target = [embed(&s.sx, site, &dims)?, embed(&s.sy, site, &dims)?, embed(&s.sz, site, &dims)?];
        h = &h + &target[2].scaled(t.omega0);
        match &t.coupling {
            Coupling::Scalar { azx } => {
                h = &h + &(&central[2] * &target[0]).scaled(*azx);
            }
            Coupling::Tensor { tensor } => {
                for (a, row) in tensor.iter().enumerate() {
                    for (b, &v) in row.iter().enumerate() {
                        if v != 0.0 {
                            h = &h + &(&central[a] * &target[b]).scaled(v);
                        }
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Rectangular microwave/RF pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivePulse {
    pub omega1: f64,
    pub omegap: f64,
    pub phase: f64,
    pub duration: f64,
}

impl DrivePulse {
    pub fn new(omega1: f64, omegap: f64, phase: f64, duration: f64) -> Result<Self> {
        let p = Self { omega1, omegap, phase, duration };
        p.validate()?;
        Ok(p)
    }

    /// π pulse of duration 1/(2ω1).
    pub fn pi(omega1: f64, omegap: f64) -> Result<Self> {
        Self::new(omega1, omegap, 0.0, 0.5 / omega1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega1 > 0.0 && self.omegap > 0.0 && self.duration > 0.0) || !self.phase.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "pulse needs omega1, omegap, duration > 0 (got {}, {}, {})",
                self.omega1, self.omegap, self.duration
            )));
        }
        Ok(())
    }
}

/// ω1 cos(2π ωp t + φ).
pub fn drive_coefficient(t: f64, pulse: &DrivePulse) -> f64 {
    pulse.omega1 * (std::f64::consts::TAU * pulse.omegap * t + pulse.phase).cos()
}

/// Drive Hamiltonian at lab time `t`, a multiple of `drive_op`.
pub fn drive_h1(t: f64, pulse: &DrivePulse, drive_op: &Operator) -> Operator {
    drive_op.scaled(drive_coefficient(t, pulse))
}

/// Drive operator on the central spin: 2·Sx, i.e. σx for a qubit.
pub fn drive_operator(dims: &[usize]) -> Result<Operator> {
    let s = spin_ops(dims[0])?;
    embed(&s.sx.scaled(2.0), 0, dims)
}

/// ¹⁵NV ground-state parameters in MHz, mT and radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NvParams {
    pub d_zfs: f64,
    pub gamma_e: f64,
    pub gamma_n: f64,
    pub axx: f64,
    pub ayy: f64,
    pub azz: f64,
    pub b0: f64,
    pub theta0: f64,
}

impl Default for NvParams {
    fn default() -> Self {
        Self {
            d_zfs: 2.87e3,
            gamma_e: -28.025,
            gamma_n: -4.316e-3,
            axx: 3.65,
            ayy: 3.65,
            azz: 3.03,
            b0: 32.0,
            theta0: 2.9f64.to_radians(),
        }
    }
}

/// Transverse electron Zeeman may be at most this fraction of D.
pub const MAX_TRANSVERSE_ZEEMAN_RATIO: f64 = 0.1;

impl NvParams {
    pub fn validate(&self) -> Result<()> {
        let ez = (self.gamma_e * self.b0).abs();
        if !(self.d_zfs > 0.0) {
            return Err(Error::InvalidParameter("d_zfs must be positive".into()));
        }
        if ez >= self.d_zfs {
            return Err(Error::InvalidParameter(format!(
                "electron Zeeman {ez} MHz reaches the level anti-crossing (D = {})",
                self.d_zfs
            )));
        }
        let transverse = ez * self.theta0.sin().abs();
        if transverse > MAX_TRANSVERSE_ZEEMAN_RATIO * self.d_zfs {
            return Err(Error::InvalidParameter(format!(
                "transverse Zeeman {transverse} MHz is not small against D = {}",
                self.d_zfs
            )));
        }
        Ok(())
    }
}

pub const NV_DIMS: [usize; 2] = [3, 2];

/// Electron spin-1 level indices on site 0.
pub mod nv_level {
    pub const PLUS_ONE: usize = 0;
    pub const ZERO: usize = 1;
    pub const MINUS_ONE: usize = 2;
}

fn nv_spin_products() -> Result<([Operator; 3], [Operator; 3])> {
    let s = spin_ops(3)?;
    let i = spin_ops(2)?;
    let e = [embed(&s.sx, 0, &NV_DIMS)?, embed(&s.sy, 0, &NV_DIMS)?, embed(&s.sz, 0, &NV_DIMS)?];
    let n = [embed(&i.sx, 1, &NV_DIMS)?, embed(&i.sy, 1, &NV_DIMS)?, embed(&i.sz, 1, &NV_DIMS)?];
    Ok((e, n))
}

fn hyperfine(tensor: &[[f64; 3]; 3], e: &[Operator; 3], n: &[Operator; 3]) -> Operator {
    let mut h = Operator::zeros(&NV_DIMS);
    for a in 0..3 {
        for b in 0..3 {
            if tensor[a][b] != 0.0 {
                h = &h + &(&e[a] * &n[b]).scaled(tensor[a][b]);
            }
        }
    }
    h
}

/// NV Hamiltonian in the crystal frame with a field tilted by θ0 in the xz plane.
pub fn nv_h0(params: &NvParams) -> Result<Operator> {
    params.validate()?;
    let (e, n) = nv_spin_products()?;
    let (s, c) = params.theta0.sin_cos();
    let mut h = (&e[2] * &e[2]).scaled(params.d_zfs);
    h = &h - &(&e[2].scaled(c) + &e[0].scaled(s)).scaled(params.gamma_e * params.b0);
    h = &h - &(&n[2].scaled(c) + &n[0].scaled(s)).scaled(params.gamma_n * params.b0);
    let diag = [[params.axx, 0.0, 0.0], [0.0, params.ayy, 0.0], [0.0, 0.0, params.azz]];
    Ok(&h + &hyperfine(&diag, &e, &n))
}

/// Hyperfine tensor expressed in the field-aligned frame.
pub fn nv_rotated_tensor(params: &NvParams) -> [[f64; 3]; 3] {
    let (s, c) = params.theta0.sin_cos();
    let xz = (params.axx - params.azz) * s * c;
    [
        [params.axx * c * c + params.azz * s * s, 0.0, xz],
        [0.0, params.ayy, 0.0],
        [xz, 0.0, params.axx * s * s + params.azz * c * c],
    ]
}

/// The NV Hamiltonian written in the field-aligned frame: aligned Zeeman
/// terms, the rotated tensor, and the zero-field term about the tilted axis.
pub fn nv_rotated_frame_h0(params: &NvParams) -> Result<Operator> {
    params.validate()?;
    let (e, n) = nv_spin_products()?;
    let (s, c) = params.theta0.sin_cos();
    let axis = &e[2].scaled(c) - &e[0].scaled(s);
    let mut h = (&axis * &axis).scaled(params.d_zfs);
    h = &h - &e[2].scaled(params.gamma_e * params.b0);
    h = &h - &n[2].scaled(params.gamma_n * params.b0);
    Ok(&h + &hyperfine(&nv_rotated_tensor(params), &e, &n))
}

/// Minimum separation between the best and second-best overlaps.
pub const LABEL_SEPARATION: f64 = 0.1;

fn flat_index(label: &[usize], dims: &[usize]) -> Result<usize> {
    if label.len() != dims.len() {
        return Err(Error::DimensionMismatch { expected: dims.len(), found: label.len() });
    }
    let mut idx = 0;
    for (s, (&l, &d)) in label.iter().zip(dims).enumerate() {
        if l >= d {
            return Err(Error::SiteOutOfRange { site: s, sites: dims.len() });
        }
        idx = idx * d + l;
    }
    Ok(idx)
}

/// Energies of the eigenstates assigned to the given product basis labels.
pub fn labelled_energies(h0: &Operator, labels: &[&[usize]]) -> Result<Vec<f64>> {
    let spectrum = eig_hermitian(h0)?;
    let v = spectrum.vectors.matrix();
    labels
        .iter()
        .map(|label| {
            let b = flat_index(label, h0.dims())?;
            let mut overlaps: Vec<(f64, usize)> = (0..v.ncols()).map(|k| (v[(b, k)].norm_sqr(), k)).collect();
            overlaps.sort_by(|x, y| y.0.total_cmp(&x.0));
            let (best, k) = overlaps[0];
            let second = overlaps.get(1).map_or(0.0, |o| o.0);
            if best - second < LABEL_SEPARATION {
                return Err(Error::AmbiguousLabel { label: label.to_vec(), best, second });
            }
            Ok(spectrum.values[k])
        })
        .collect()
}

/// |E_to − E_from| between eigenstates labelled by maximum basis overlap.
pub fn transition_frequency(h0: &Operator, from: &[usize], to: &[usize]) -> Result<f64> {
    let e = labelled_energies(h0, &[from, to])?;
    Ok((e[1] - e[0]).abs())
}

/// Mean of the nuclear-resolved m_S = 0 → −1 transition frequencies.
pub fn nv_carrier(h0: &Operator) -> Result<f64> {
    use nv_level::{MINUS_ONE, ZERO};
    let up = transition_frequency(h0, &[ZERO, 0], &[MINUS_ONE, 0])?;
    let down = transition_frequency(h0, &[ZERO, 1], &[MINUS_ONE, 1])?;
    Ok(0.5 * (up + down))
}

/// Fraction of the initial population of the addressed central level that a
/// pulse moves into the other addressed level.
pub fn pulse_transfer(system: &SpinSystem, pulse: &DrivePulse, dt: f64) -> Result<f64> {
    let u = pulse_propagator(system.h0(), pulse, system.drive(), 0.0, dt)?;
    let (from, to) = system.transition();
    let p_from = system.central_population(system.rho0(), from)?;
    if p_from <= 0.0 {
        return Err(Error::InvalidParameter("initial state leaves the addressed level empty".into()));
    }
    let rhof = system.rho0().evolve(&u)?;
    Ok(system.central_population(&rhof, to)? / p_from)
}

/// Minimum transfer accepted from `calibrate_rabi`.
pub const MIN_CALIBRATED_TRANSFER: f64 = 0.99;

/// Finds ω1 that maximises transfer on the addressed transition for a pulse
/// of duration `target_tpi` at `carrier`.
pub fn calibrate_rabi(system: &SpinSystem, target_tpi: f64, carrier: f64, cfg: &SimConfig) -> Result<f64> {
    if !(target_tpi > 0.0 && carrier > 0.0) {
        return Err(Error::InvalidParameter("target_tpi and carrier must be positive".into()));
    }
    let (from, to) = system.transition();
    let d = system.dims()[0];
    let site_drive = spin_ops(d)?.sx.scaled(2.0);
    let element = site_drive.get(from, to).norm();
    if element == 0.0 {
        return Err(Error::InvalidParameter("drive has no matrix element on the addressed transition".into()));
    }
    let guess = 1.0 / (2.0 * target_tpi * element);
    let transfer = |omega1: f64| -> Result<f64> {
        pulse_transfer(system, &DrivePulse::new(omega1, carrier, 0.0, target_tpi)?, cfg.dt)
    };

    let steps = 20;
    let (lo, hi) = (0.8 * guess, 1.2 * guess);
    let grid: Vec<f64> = (0..=steps).map(|k| lo + (hi - lo) * k as f64 / steps as f64).collect();
    let values = grid.iter().map(|&w| transfer(w)).collect::<Result<Vec<_>>>()?;
    let best = (0..values.len()).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);

    // golden-section refinement on the bracketing cells
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(steps)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = transfer(x1)?;
    let mut f2 = transfer(x2)?;
    while (b - a) > 1e-7 * guess {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = transfer(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = transfer(x2)?;
        }
    }
    let (omega1, achieved) = [(grid[best], values[best]), (x1, f1), (x2, f2)]
        .into_iter()
        .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    if achieved < MIN_CALIBRATED_TRANSFER {
        return Err(Error::Calibration { best_omega1: omega1, best_transfer: achieved });
    }
    Ok(omega1)
}
