//! Composite runs: gate metrics, pulse-error maps and coupling scans.

use serde::{Deserialize, Serialize};

use crate::algebra::{partial_trace, DensityMatrix};
use crate::analysis::{concurrence, pseudo_fidelity, state_fidelity, GateMetrics, OscillationFit, SweepResult};
use crate::error::{Error, Result};
use crate::evolution::{sweep_n_states, SimConfig};
use crate::hamiltonians::{Coupling, GenericSystemParams};
use crate::parallel::{map_ordered, Execution};
use crate::sequences::SequenceTemplate;
use crate::system::{InitialState, SpinSystem};

/// Which target the gate acts on and what it should end in.
#[derive(Clone, Debug)]
pub struct GateTarget {
    pub label: String,
    pub site: usize,
    pub ideal: DensityMatrix,
}

#[derive(Clone, Debug)]
pub struct GateRun {
    pub sweep: SweepResult,
    pub states: Vec<DensityMatrix>,
    pub fit: OscillationFit,
    pub metrics: GateMetrics,
}

/// Pulse count in the first fitted period that moves the target observable
/// farthest from its initial value.
fn inversion_count(trace: &[f64], initial: f64, period: f64) -> usize {
    let limit = (period.ceil() as usize).clamp(1, trace.len());
    (0..limit)
        .max_by(|&a, &b| (trace[a] - initial).abs().total_cmp(&(trace[b] - initial).abs()))
        .unwrap_or(0)
        + 1
}

/// N-sweep at fixed τ with the oscillation fit and gate metrics.
pub fn gate_run(
    system: &SpinSystem,
    template: &SequenceTemplate,
    tau: f64,
    n_max: usize,
    target: &GateTarget,
    cfg: &SimConfig,
) -> Result<GateRun> {
    let states = sweep_n_states(system, template, tau, n_max, cfg)?;
    let rows = states.iter().map(|s| system.measure(s)).collect::<Result<Vec<_>>>()?;
    let axis: Vec<f64> = (1..=n_max).map(|n| n as f64).collect();
    let sweep = SweepResult::from_rows("N", axis.clone(), system, rows)?;
    let observable = system
        .observable(&target.label)
        .ok_or_else(|| Error::InvalidParameter(format!("no observable named {}", target.label)))?;
    let trace = sweep.trace(&target.label).unwrap_or_default();
    let (lo, hi) = observable.range();
    let fit = pseudo_fidelity(&axis, trace, hi - lo)?;
    let initial = observable.measure(system.rho0())?;
    let n_pi = inversion_count(trace, initial, fit.period);
    let reduced = partial_trace(&states[n_pi - 1], &[target.site])?;
    let state_fidelity = state_fidelity(&reduced, &target.ideal)?;
    let concurrence_at_half = if system.dims() == [2, 2] && n_pi >= 2 {
        Some(concurrence(&states[n_pi / 2 - 1])?)
    } else {
        None
    };
    let metrics = GateMetrics {
        pseudo_fidelity: fit.pseudo_fidelity,
        t_pi: n_pi as f64 * tau,
        n_pi,
        state_fidelity,
        concurrence_at_half,
    };
    Ok(GateRun { sweep, states, fit, metrics })
}

/// Pseudo-fidelity of one observable's N-sweep.
pub fn sweep_pseudo_fidelity(
    system: &SpinSystem,
    template: &SequenceTemplate,
    tau: f64,
    n_max: usize,
    label: &str,
    cfg: &SimConfig,
) -> Result<OscillationFit> {
    let observable =
        system.observable(label).ok_or_else(|| Error::InvalidParameter(format!("no observable named {label}")))?;
    let idx = system.observables().iter().position(|o| o.label() == label).unwrap_or(0);
    let states = sweep_n_states(system, template, tau, n_max, cfg)?;
    let trace = states.iter().map(|s| system.observables()[idx].measure(s)).collect::<Result<Vec<_>>>()?;
    let axis: Vec<f64> = (1..=n_max).map(|n| n as f64).collect();
    let (lo, hi) = observable.range();
    pseudo_fidelity(&axis, &trace, hi - lo)
}

/// Grid of pseudo-fidelities, rows = length factors, columns = frequency factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMap {
    pub length_factors: Vec<f64>,
    pub freq_factors: Vec<f64>,
    /// `None` where the oscillation fit failed.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl ErrorMap {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row][col]
    }

    /// (row, col, value) of the best cell.
    pub fn argmax(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in self.cells.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    if best.is_none_or(|b| *v > b.2) {
                        best = Some((i, j, *v));
                    }
                }
            }
        }
        best
    }
}

#[allow(clippy::too_many_arguments)]
pub fn error_map(
    system: &SpinSystem,
    template: &SequenceTemplate,
    tau: f64,
    n_max: usize,
    label: &str,
    length_factors: &[f64],
    freq_factors: &[f64],
    cfg: &SimConfig,
    exec: Execution,
) -> Result<ErrorMap> {
    if length_factors.is_empty() || freq_factors.is_empty() {
        return Err(Error::Empty);
    }
    let cells: Vec<(f64, f64)> =
        length_factors.iter().flat_map(|&l| freq_factors.iter().map(move |&f| (l, f))).collect();
    let values = map_ordered(&cells, exec, |&(l, f)| {
        let t = template.with_errors(l, f);
        match sweep_pseudo_fidelity(system, &t, tau, n_max, label, cfg) {
            Ok(fit) => Ok(Some(fit.pseudo_fidelity)),
            Err(Error::Fit(_)) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ErrorMap {
        length_factors: length_factors.to_vec(),
        freq_factors: freq_factors.to_vec(),
        cells: values.chunks(freq_factors.len()).map(|c| c.to_vec()).collect(),
    })
}

/// (azx, T_π) pairs for a single-target generic register, with T_π the
/// fitted half period of the target oscillation times τ.
#[allow(clippy::too_many_arguments)]
pub fn coupling_scan(
    base: &GenericSystemParams,
    couplings: &[f64],
    template: &SequenceTemplate,
    tau: f64,
    n_max: usize,
    label: &str,
    cfg: &SimConfig,
    exec: Execution,
) -> Result<Vec<(f64, f64)>> {
    if base.targets.len() != 1 {
        return Err(Error::InvalidParameter("coupling scans use a single target".into()));
    }
    let runs = map_ordered(couplings, exec, |&azx| {
        let mut params = base.clone();
        params.targets[0].coupling = Coupling::Scalar { azx };
        let system = SpinSystem::generic(&params, InitialState::Polarized)?;
        let fit = sweep_pseudo_fidelity(&system, template, tau, n_max, label, cfg)?;
        Ok((azx, 0.5 * fit.period * tau))
    });
    runs.into_iter().collect()
}
