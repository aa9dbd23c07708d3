//! Laboratory-frame propagation through compiled pulse sequences.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algebra::{conjugate, expm_step, DensityMatrix, Operator, C64};
use crate::analysis::SweepResult;
use crate::error::{Error, Result};
use crate::hamiltonians::{drive_coefficient, DrivePulse};
use crate::parallel::{map_ordered, Execution};
use crate::sequences::{PulseSequence, SequenceElement, SequenceTemplate};
use crate::system::SpinSystem;

/// Minimum number of Trotter steps per π pulse.
pub const MIN_STEPS_PER_PI: f64 = 20.0;

/// Relative slack when checking that a duration is a whole number of steps.
const STEP_TOLERANCE: f64 = 1e-6;

/// Reference time for the carrier phase inside a pulse.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierPhase {
    /// t is lab time since sequence start.
    #[default]
    Coherent,
    /// t restarts at zero at the start of every pulse.
    PerPulse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    #[serde(default)]
    pub record_intermediate: bool,
    #[serde(default)]
    pub carrier_phase: CarrierPhase,
}

impl SimConfig {
    pub fn new(dt: f64) -> Self {
        Self { dt, record_intermediate: false, carrier_phase: CarrierPhase::Coherent }
    }

    pub fn recording(mut self) -> Self {
        self.record_intermediate = true;
        self
    }

    pub fn with_carrier_phase(mut self, mode: CarrierPhase) -> Self {
        self.carrier_phase = mode;
        self
    }

    /// Checks dt against the shortest π pulse it has to resolve.
    pub fn validate_for(&self, t_pi: f64) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.dt > t_pi / MIN_STEPS_PER_PI * (1.0 + STEP_TOLERANCE) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} gives fewer than {MIN_STEPS_PER_PI} steps per π pulse of {t_pi}",
                self.dt
            )));
        }
        Ok(())
    }
}

fn exact_steps(duration: f64, dt: f64) -> Result<usize> {
    let ratio = duration / dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > STEP_TOLERANCE {
        return Err(Error::StepMismatch { duration, dt });
    }
    Ok(n as usize)
}

fn driven_unitary(
    h0: &DMatrix<C64>,
    drive: &DMatrix<C64>,
    pulse: &DrivePulse,
    t_start: f64,
    phase_origin: f64,
    steps: usize,
    dt: f64,
) -> DMatrix<C64> {
    let n = h0.nrows();
    let mut u = DMatrix::<C64>::identity(n, n);
    let mut h = h0.clone();
    for k in 0..steps {
        let t = t_start + (k as f64 + 0.5) * dt;
        let c = C64::new(drive_coefficient(t - phase_origin, pulse), 0.0);
        h.zip_zip_apply(h0, drive, |out, a, b| *out = a + b * c);
        u = expm_step(&h, dt) * u;
    }
    u
}

/// Time-ordered product of midpoint-sampled Trotter steps over one pulse
/// starting at lab time `t_start`. The duration must be a whole number of steps.
pub fn pulse_propagator(h0: &Operator, pulse: &DrivePulse, drive: &Operator, t_start: f64, dt: f64) -> Result<Operator> {
    pulse.validate()?;
    if drive.side() != h0.side() {
        return Err(Error::DimensionMismatch { expected: h0.side(), found: drive.side() });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let steps = exact_steps(pulse.duration, dt)?;
    let u = driven_unitary(h0.matrix(), drive.matrix(), pulse, t_start, 0.0, steps, dt);
    Operator::new(u, h0.dims().to_vec())
}

/// Nominal schedule versus the dt-snapped lab clock. Pulses are rounded to
/// whole steps; the following delay absorbs the difference.
#[derive(Clone, Copy, Debug)]
struct Clock {
    nominal: f64,
    actual: f64,
}

struct Propagator<'a> {
    system: &'a SpinSystem,
    cfg: &'a SimConfig,
}

impl Propagator<'_> {
    fn element(&self, clock: &mut Clock, element: &SequenceElement) -> Result<Operator> {
        match element {
            SequenceElement::Delay { duration } => {
                clock.nominal += duration;
                let actual = (clock.nominal - clock.actual).max(0.0);
                clock.actual += actual;
                self.system.free_propagator(actual)
            }
            SequenceElement::Pulse { pulse, .. } => {
                let dt = self.cfg.dt;
                let steps = (pulse.duration / dt).round().max(1.0) as usize;
                let start = clock.actual;
                let origin = match self.cfg.carrier_phase {
                    CarrierPhase::Coherent => 0.0,
                    CarrierPhase::PerPulse => start,
                };
                clock.nominal += pulse.duration;
                clock.actual += steps as f64 * dt;
                let u = driven_unitary(
                    self.system.h0().matrix(),
                    self.system.drive().matrix(),
                    pulse,
                    start,
                    origin,
                    steps,
                    dt,
                );
                Operator::new(u, self.system.dims().to_vec())
            }
        }
    }

    fn run(&self, clock: &mut Clock, elements: &[SequenceElement], offset: usize, rho: &mut Operator, record: &mut Option<Vec<DensityMatrix>>) -> Result<()> {
        for (i, e) in elements.iter().enumerate() {
            let u = self.element(clock, e).map_err(|err| err.at(offset + i))?;
            *rho = conjugate(&u, rho);
            if let Some(states) = record.as_mut() {
                states.push(DensityMatrix::trusted(rho.clone(), format!("after element {}", offset + i)));
            }
        }
        Ok(())
    }
}

fn check(system: &SpinSystem, seq: &PulseSequence, cfg: &SimConfig) -> Result<()> {
    cfg.validate_for(seq.min_pi_duration())?;
    for (p, _) in seq.pulses() {
        p.validate()?;
    }
    if system.rho0().op().side() != system.h0().side() {
        return Err(Error::DimensionMismatch { expected: system.h0().side(), found: system.rho0().op().side() });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SequenceOutcome {
    pub final_state: DensityMatrix,
    /// State after each element, when requested.
    pub intermediate: Option<Vec<DensityMatrix>>,
}

/// ρ_f = U ρ0 U† for the whole sequence, with a continuous lab clock.
pub fn apply_sequence(system: &SpinSystem, seq: &PulseSequence, cfg: &SimConfig) -> Result<SequenceOutcome> {
    check(system, seq, cfg)?;
    let p = Propagator { system, cfg };
    let mut clock = Clock { nominal: 0.0, actual: 0.0 };
    let mut rho = system.rho0().op().clone();
    let mut record = cfg.record_intermediate.then(Vec::new);
    p.run(&mut clock, &seq.elements, 0, &mut rho, &mut record)?;
    Ok(SequenceOutcome {
        final_state: DensityMatrix::trusted(rho, format!("{}-{} final", seq.family.name(), seq.n_pulses)),
        intermediate: record,
    })
}

/// Total unitary of a sequence.
pub fn sequence_propagator(system: &SpinSystem, seq: &PulseSequence, cfg: &SimConfig) -> Result<Operator> {
    check(system, seq, cfg)?;
    let p = Propagator { system, cfg };
    let mut clock = Clock { nominal: 0.0, actual: 0.0 };
    let mut total = Operator::identity(system.dims());
    for (i, e) in seq.elements.iter().enumerate() {
        let u = p.element(&mut clock, e).map_err(|err| err.at(i))?;
        total = &u * &total;
    }
    Ok(total)
}

/// Final states of the trains with N = 1 … n_max at fixed τ. Trains share
/// their prefix, so each N only pays for its closing edge and wrapper.
pub fn sweep_n_states(
    system: &SpinSystem,
    template: &SequenceTemplate,
    tau: f64,
    n_max: usize,
    cfg: &SimConfig,
) -> Result<Vec<DensityMatrix>> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    let full = template.compile(n_max, tau)?;
    check(system, &full, cfg)?;
    let p = Propagator { system, cfg };
    let mut clock = Clock { nominal: 0.0, actual: 0.0 };
    let mut rho = system.rho0().op().clone();
    let mut none = None;
    let body = &full.elements[..full.elements.len() - 2];
    let mut states = Vec::with_capacity(n_max);
    let mut pis = 0;
    for (i, e) in body.iter().enumerate() {
        p.run(&mut clock, std::slice::from_ref(e), i, &mut rho, &mut none)?;
        if matches!(e, SequenceElement::Pulse { angle: crate::sequences::Angle::Pi, .. }) {
            pis += 1;
            let seq = template.compile(pis, tau)?;
            let tail = &seq.elements[seq.elements.len() - 2..];
            let mut tail_clock = clock;
            let mut closed = rho.clone();
            p.run(&mut tail_clock, tail, i + 1, &mut closed, &mut none)?;
            states.push(DensityMatrix::trusted(closed, format!("{}-{pis} final", seq.family.name())));
        }
    }
    Ok(states)
}

/// Observable traces versus N = 1 … n_max at fixed τ.
pub fn sweep_n(
    system: &SpinSystem,
    template: &SequenceTemplate,
    tau: f64,
    n_max: usize,
    cfg: &SimConfig,
) -> Result<SweepResult> {
    let states = sweep_n_states(system, template, tau, n_max, cfg)?;
    let rows = states.iter().map(|s| system.measure(s)).collect::<Result<Vec<_>>>()?;
    let axis = (1..=n_max).map(|n| n as f64).collect();
    SweepResult::from_rows("N", axis, system, rows)
}

/// Observable traces versus τ for a fixed pulse count.
pub fn sweep_tau(
    system: &SpinSystem,
    template: &SequenceTemplate,
    n: usize,
    tau_grid: &[f64],
    cfg: &SimConfig,
    exec: Execution,
) -> Result<SweepResult> {
    if tau_grid.is_empty() {
        return Err(Error::Empty);
    }
    if tau_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("tau grid must be strictly increasing".into()));
    }
    let rows = map_ordered(tau_grid, exec, |&tau| {
        let seq = template.compile(n, tau)?;
        let out = apply_sequence(system, &seq, cfg)?;
        system.measure(&out.final_state)
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    SweepResult::from_rows("tau", tau_grid.to_vec(), system, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::herm_propagator;
    use crate::hamiltonians::GenericSystemParams;
    use crate::sequences::{Angle, ClosingRule, Family, Y_PHASE};
    use crate::system::InitialState;

    fn generic(azx: f64) -> SpinSystem {
        SpinSystem::generic(&GenericSystemParams::scalar(50.0, &[(1.0, azx)]), InitialState::Polarized).unwrap()
    }

    #[test]
    fn zero_drive_limit_is_free_evolution() {
        let sys = generic(0.2);
        let pulse = DrivePulse::new(1e-300, 50.0, 0.0, 0.1).unwrap();
        let u = pulse_propagator(sys.h0(), &pulse, sys.drive(), 0.3, 0.001).unwrap();
        let free = herm_propagator(sys.h0(), 0.1).unwrap();
        assert!(u.max_abs_diff(&free) < 1e-10);
    }

    #[test]
    fn resonant_pi_pulse_inverts_central_spin() {
        let sys = generic(0.0);
        let pulse = DrivePulse::pi(5.0, 50.0).unwrap();
        let u = pulse_propagator(sys.h0(), &pulse, sys.drive(), 0.0, 0.001).unwrap();
        let rho = sys.rho0().evolve(&u).unwrap();
        let sz = sys.measure(&rho).unwrap()[0];
        assert!((sz + 0.5).abs() < 0.01, "{sz}");
        assert!(u.unitarity_residual() < 1e-9);
    }

    #[test]
    fn step_mismatch_is_reported() {
        let sys = generic(0.2);
        let pulse = DrivePulse::new(5.0, 50.0, 0.0, 0.1005).unwrap();
        assert!(matches!(
            pulse_propagator(sys.h0(), &pulse, sys.drive(), 0.0, 0.001),
            Err(Error::StepMismatch { .. })
        ));
    }

    #[test]
    fn trotter_refinement_converges() {
        let sys = generic(0.2);
        let pulse = DrivePulse::pi(5.0, 50.0).unwrap();
        let u = |dt: f64| pulse_propagator(sys.h0(), &pulse, sys.drive(), 0.0, dt).unwrap();
        // entrywise, at one eighth of the 0.001 production step
        let fine = u(0.001 / 8.0);
        assert!(fine.max_abs_diff(&u(0.001 / 16.0)) < 1e-4);
        // second order: halving dt cuts the change by about four
        let r = u(0.001).max_abs_diff(&u(0.0005)) / u(0.0005).max_abs_diff(&u(0.00025));
        assert!((r - 4.0).abs() < 0.3, "{r}");
    }

    #[test]
    fn wrappers_only_restore_the_pole() {
        let sys = generic(0.1);
        let pi = DrivePulse::pi(5.0, 50.0).unwrap();
        let open = DrivePulse { phase: Y_PHASE, duration: 0.05, ..pi };
        let close = DrivePulse { phase: Y_PHASE, duration: 0.15, ..pi };
        let seq = PulseSequence {
            elements: vec![
                SequenceElement::Pulse { pulse: open, angle: Angle::HalfPi },
                SequenceElement::Pulse { pulse: close, angle: Angle::ThreeHalvesPi },
            ],
            family: Family::Cpmg,
            n_pulses: 0,
            tau: 0.5,
            error_length_factor: 1.0,
            error_freq_factor: 1.0,
            pi_pulse: pi,
            wrapper_phase: Y_PHASE,
            closing: ClosingRule::HalfPi,
        };
        let out = apply_sequence(&sys, &seq, &SimConfig::new(0.001)).unwrap();
        let sz = sys.measure(&out.final_state).unwrap()[0];
        assert!((sz - 0.5).abs() < 0.01, "{sz}");
    }

    #[test]
    fn dt_must_resolve_the_pulse() {
        let sys = generic(0.1);
        let t = SequenceTemplate::new(Family::Cpmg, DrivePulse::pi(5.0, 50.0).unwrap());
        let seq = t.compile(2, 0.5).unwrap();
        assert!(apply_sequence(&sys, &seq, &SimConfig::new(0.01)).is_err());
        assert!(apply_sequence(&sys, &seq, &SimConfig::new(0.005)).is_ok());
    }

    #[test]
    fn intermediate_states_follow_elements() {
        let sys = generic(0.1);
        let t = SequenceTemplate::new(Family::Cpmg, DrivePulse::pi(5.0, 50.0).unwrap());
        let seq = t.compile(3, 0.5).unwrap();
        let out = apply_sequence(&sys, &seq, &SimConfig::new(0.001).recording()).unwrap();
        let states = out.intermediate.unwrap();
        assert_eq!(states.len(), seq.elements.len());
        assert_eq!(states.last().unwrap().op(), out.final_state.op());
    }

    #[test]
    fn incremental_sweep_matches_full_runs() {
        let sys = generic(0.2);
        let t = SequenceTemplate::new(Family::Xyn, DrivePulse::pi(5.0, 50.0).unwrap())
            .with_closing(ClosingRule::SignPreserving)
            .with_errors(1.15, 1.0);
        let cfg = SimConfig::new(0.001);
        let states = sweep_n_states(&sys, &t, 0.5, 6, &cfg).unwrap();
        for (k, s) in states.iter().enumerate() {
            let full = apply_sequence(&sys, &t.compile(k + 1, 0.5).unwrap(), &cfg).unwrap();
            assert!(s.op().max_abs_diff(full.final_state.op()) < 1e-12, "N={}", k + 1);
        }
    }

    #[test]
    fn singleton_tau_sweep_matches_apply() {
        let sys = generic(0.1);
        let t = SequenceTemplate::new(Family::Cpmg, DrivePulse::pi(5.0, 50.0).unwrap());
        let cfg = SimConfig::new(0.001);
        let sweep = sweep_tau(&sys, &t, 4, &[0.5], &cfg, Execution::Sequential).unwrap();
        let out = apply_sequence(&sys, &t.compile(4, 0.5).unwrap(), &cfg).unwrap();
        let direct = sys.measure(&out.final_state).unwrap();
        assert_eq!(sweep.trace("Sz").unwrap(), &[direct[0]]);
        assert!(sweep_tau(&sys, &t, 4, &[0.6, 0.5], &cfg, Execution::Sequential).is_err());
    }

    #[test]
    fn per_pulse_phase_reset_differs_from_coherent() {
        let sys = generic(0.2);
        let t = SequenceTemplate::new(Family::Cpmg, DrivePulse::pi(5.0, 50.0).unwrap());
        let seq = t.compile(4, 0.51).unwrap();
        let a = apply_sequence(&sys, &seq, &SimConfig::new(0.001)).unwrap();
        let b = apply_sequence(&sys, &seq, &SimConfig::new(0.001).with_carrier_phase(CarrierPhase::PerPulse)).unwrap();
        assert!(a.final_state.op().max_abs_diff(b.final_state.op()) > 1e-6);
    }
}
