//! A driven spin register: static Hamiltonian, drive, initial state, observables.

use serde::{Deserialize, Serialize};

use crate::algebra::{eig_hermitian, embed, spin_ops, DensityMatrix, Operator, Spectrum};
use crate::analysis::{expval, fluorescence};
use crate::error::{Error, Result};
use crate::hamiltonians::{
    drive_operator, generic_h0, nv_carrier, nv_h0, nv_level, GenericSystemParams, NvParams, NV_DIMS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    /// Abstract frequency and time units.
    Abstract,
    /// Frequencies in MHz, times in µs.
    MhzMicrosecond,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// Central spin in its initial level, every target in its upper level.
    #[default]
    Polarized,
    /// Central spin in its initial level, targets maximally mixed.
    MixedTarget,
}

#[derive(Clone, Debug)]
pub enum Observable {
    Expectation { label: String, op: Operator },
    /// Tr(2 ρ_ref ρ) against a fixed reference state.
    Fluorescence { label: String, reference: DensityMatrix },
}

impl Observable {
    pub fn label(&self) -> &str {
        match self {
            Observable::Expectation { label, .. } | Observable::Fluorescence { label, .. } => label,
        }
    }

    pub fn measure(&self, rho: &DensityMatrix) -> Result<f64> {
        match self {
            Observable::Expectation { op, .. } => expval(rho, op),
            Observable::Fluorescence { reference, .. } => fluorescence(reference, rho),
        }
    }

    /// (min, max) attainable value, used to normalise oscillation amplitudes.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Observable::Expectation { op, .. } => match eig_hermitian(op) {
                Ok(sp) => (sp.values[0], *sp.values.last().unwrap_or(&0.0)),
                Err(_) => (0.0, 0.0),
            },
            Observable::Fluorescence { .. } => (0.0, 1.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpinSystem {
    h0: Operator,
    spectrum: Spectrum,
    drive: Operator,
    rho0: DensityMatrix,
    observables: Vec<Observable>,
    units: Units,
    transition: (usize, usize),
    carrier: f64,
}

impl SpinSystem {
    /// `transition` holds the central-spin levels (initial, addressed) on site 0.
    pub fn new(
        h0: Operator,
        drive: Operator,
        rho0: DensityMatrix,
        observables: Vec<Observable>,
        units: Units,
        transition: (usize, usize),
        carrier: f64,
    ) -> Result<Self> {
        let side = h0.side();
        for (what, found) in [("drive", drive.side()), ("initial state", rho0.op().side())] {
            if found != side {
                return Err(Error::InvalidParameter(format!("{what} has side {found}, Hamiltonian has {side}")));
            }
        }
        if drive.hermiticity_residual() > 1e-10 {
            return Err(Error::NotHermitian { residual: drive.hermiticity_residual() });
        }
        let d0 = h0.dims()[0];
        if transition.0 >= d0 || transition.1 >= d0 || transition.0 == transition.1 {
            return Err(Error::InvalidParameter(format!("invalid addressed transition {transition:?}")));
        }
        for o in &observables {
            if let Observable::Expectation { op, .. } = o {
                if op.side() != side {
                    return Err(Error::DimensionMismatch { expected: side, found: op.side() });
                }
            }
        }
        let spectrum = eig_hermitian(&h0)?;
        Ok(Self { h0, spectrum, drive, rho0, observables, units, transition, carrier })
    }

    /// Generic register with observables `Sz`, `Iz1`, `Iz2`, … and carrier ω00.
    pub fn generic(params: &GenericSystemParams, initial: InitialState) -> Result<Self> {
        let h0 = generic_h0(params)?;
        let dims = params.dims();
        let s = spin_ops(2)?;
        let mut observables = vec![Observable::Expectation { label: "Sz".into(), op: embed(&s.sz, 0, &dims)? }];
        for j in 1..dims.len() {
            observables.push(Observable::Expectation { label: format!("Iz{j}"), op: embed(&s.sz, j, &dims)? });
        }
        let rho0 = initial_state(&dims, 0, initial)?;
        Self::new(h0, drive_operator(&dims)?, rho0, observables, Units::Abstract, (0, 1), params.omega00)
    }

    /// NV register addressing m_S = 0 → −1, observables `F`, `Sz`, `Iz`.
    pub fn nv(params: &NvParams, initial: InitialState) -> Result<Self> {
        let h0 = nv_h0(params)?;
        let carrier = nv_carrier(&h0)?;
        let e = spin_ops(3)?;
        let n = spin_ops(2)?;
        let reference = DensityMatrix::product(
            &[
                &DensityMatrix::basis(&[nv_level::ZERO], &[3], "m_S=0")?,
                &DensityMatrix::maximally_mixed(&[2], "1/2"),
            ],
            "fluorescence reference",
        )?;
        let observables = vec![
            Observable::Fluorescence { label: "F".into(), reference },
            Observable::Expectation { label: "Sz".into(), op: embed(&e.sz, 0, &NV_DIMS)? },
            Observable::Expectation { label: "Iz".into(), op: embed(&n.sz, 1, &NV_DIMS)? },
        ];
        let rho0 = initial_state(&NV_DIMS, nv_level::ZERO, initial)?;
        Self::new(
            h0,
            drive_operator(&NV_DIMS)?,
            rho0,
            observables,
            Units::MhzMicrosecond,
            (nv_level::ZERO, nv_level::MINUS_ONE),
            carrier,
        )
    }

    pub fn with_initial_state(mut self, rho0: DensityMatrix) -> Result<Self> {
        if rho0.op().side() != self.h0.side() {
            return Err(Error::DimensionMismatch { expected: self.h0.side(), found: rho0.op().side() });
        }
        self.rho0 = rho0;
        Ok(self)
    }

    pub fn h0(&self) -> &Operator {
        &self.h0
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn drive(&self) -> &Operator {
        &self.drive
    }

    pub fn rho0(&self) -> &DensityMatrix {
        &self.rho0
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    pub fn observable(&self, label: &str) -> Option<&Observable> {
        self.observables.iter().find(|o| o.label() == label)
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn dims(&self) -> &[usize] {
        self.h0.dims()
    }

    pub fn transition(&self) -> (usize, usize) {
        self.transition
    }

    /// Carrier resonant with the addressed transition.
    pub fn carrier(&self) -> f64 {
        self.carrier
    }

    pub fn free_propagator(&self, duration: f64) -> Result<Operator> {
        self.spectrum.propagator(duration)
    }

    /// Population of a central-spin level.
    pub fn central_population(&self, rho: &DensityMatrix, level: usize) -> Result<f64> {
        let proj = embed(&Operator::projector(self.dims()[0], level)?, 0, self.dims())?;
        expval(rho, &proj)
    }

    /// All observables in declaration order.
    pub fn measure(&self, rho: &DensityMatrix) -> Result<Vec<f64>> {
        self.observables.iter().map(|o| o.measure(rho)).collect()
    }
}

fn initial_state(dims: &[usize], central_level: usize, initial: InitialState) -> Result<DensityMatrix> {
    let central = DensityMatrix::basis(&[central_level], &dims[..1], "central")?;
    let targets: Vec<DensityMatrix> = dims[1..]
        .iter()
        .map(|&d| match initial {
            InitialState::Polarized => DensityMatrix::basis(&[0], &[d], "up"),
            InitialState::MixedTarget => Ok(DensityMatrix::maximally_mixed(&[d], "mixed")),
        })
        .collect::<Result<_>>()?;
    let mut parts = vec![&central];
    parts.extend(targets.iter());
    let label = match initial {
        InitialState::Polarized => "polarized",
        InitialState::MixedTarget => "mixed-target",
    };
    DensityMatrix::product(&parts, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn generic_system_observables() {
        let sys = SpinSystem::generic(&GenericSystemParams::scalar(50.0, &[(1.0, 0.15), (0.5, 0.1)]), InitialState::Polarized)
            .unwrap();
        let labels: Vec<&str> = sys.observables().iter().map(Observable::label).collect();
        assert_eq!(labels, ["Sz", "Iz1", "Iz2"]);
        let v = sys.measure(sys.rho0()).unwrap();
        assert_eq!(v, vec![0.5, 0.5, 0.5]);
        assert_eq!(sys.carrier(), 50.0);
    }

    #[test]
    fn nv_initial_states() {
        let sys = SpinSystem::nv(&NvParams::default(), InitialState::MixedTarget).unwrap();
        let v = sys.measure(sys.rho0()).unwrap();
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-14);
        let sys = SpinSystem::nv(&NvParams::default(), InitialState::Polarized).unwrap();
        let v = sys.measure(sys.rho0()).unwrap();
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[2], 0.5, epsilon = 1e-14);
        assert_eq!(sys.observable("F").unwrap().range(), (0.0, 1.0));
        let (lo, hi) = sys.observable("Iz").unwrap().range();
        assert_abs_diff_eq!(lo, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn mismatched_state_rejected() {
        let sys = SpinSystem::generic(&GenericSystemParams::scalar(50.0, &[(1.0, 0.1)]), InitialState::Polarized).unwrap();
        let wrong = DensityMatrix::maximally_mixed(&[2], "x");
        assert!(sys.with_initial_state(wrong).is_err());
    }
}
