//! Executes a validated config and writes CSV, config copy and manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ddgate::analysis::{
    concurrence, find_resonance, fit_inverse_law, pauli_expectations, root_fidelity, state_fidelity, tomography,
    Provenance,
};
use ddgate::evolution::sweep_n_states;
use ddgate::experiments::{coupling_scan, error_map, gate_run, GateTarget};
use ddgate::hamiltonians::calibrate_rabi;
use ddgate::sequences::Y_PHASE;
use ddgate::{
    sweep_tau, DensityMatrix, DrivePulse, Execution, Operator, SequenceTemplate, SimConfig, SpinSystem, SweepResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig, Kind, SystemConfig};
use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub name: String,
    pub config_hash: String,
    pub version: String,
    pub wall_clock_seconds: f64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub dt: f64,
    pub omega1: f64,
    pub files: Vec<OutputFile>,
    pub metrics: Value,
}

/// Everything the kinds of run share once the config has been resolved.
struct Setup {
    system: SpinSystem,
    template: SequenceTemplate,
    cfg: SimConfig,
    omega1: f64,
}

fn numeric(e: ddgate::Error) -> CliError {
    CliError::Numeric(e)
}

fn build(config: &ExperimentConfig, dt_override: Option<f64>) -> Result<Setup, CliError> {
    let system = match &config.system {
        SystemConfig::Generic(p) => SpinSystem::generic(p, config.initial_state),
        SystemConfig::Nv(p) => SpinSystem::nv(p, config.initial_state),
    }
    .map_err(numeric)?;
    let p = &config.sequence.pulse;
    let t_pi = match (p.t_pi, p.omega1) {
        (Some(t), _) => t,
        (None, Some(w)) => 0.5 / w,
        (None, None) => return Err(CliError::config("sequence.pulse", "needs omega1 or t_pi")),
    };
    let dt = match (dt_override, config.sim.dt, config.sim.steps_per_pi) {
        (Some(dt), _, _) => dt,
        (None, Some(dt), _) => dt,
        (None, None, Some(k)) => t_pi / k as f64,
        (None, None, None) => return Err(CliError::config("sim", "needs dt or steps_per_pi")),
    };
    if !(dt > 0.0) {
        return Err(CliError::config("--dt", "must be positive"));
    }
    let cfg = SimConfig::new(dt).with_carrier_phase(config.sim.carrier_phase);
    let carrier = p.omegap.unwrap_or(system.carrier());
    let omega1 = if p.calibrate {
        calibrate_rabi(&system, t_pi, carrier, &cfg).map_err(numeric)?
    } else {
        p.omega1.unwrap_or(0.5 / t_pi)
    };
    let pi = DrivePulse::new(omega1, carrier, 0.0, t_pi).map_err(numeric)?;
    let s = &config.sequence;
    let template = SequenceTemplate::new(s.family, pi)
        .with_closing(s.closing)
        .with_wrapper_phase(s.wrapper_phase.unwrap_or(Y_PHASE))
        .with_errors(s.errors.length_factor, s.errors.freq_factor);
    Ok(Setup { system, template, cfg, omega1 })
}

/// 12 significant digits, dot decimal separator.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<OutputFile>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    files.push(OutputFile { path, sha256: hex(&Sha256::digest(contents.as_bytes())) });
    Ok(())
}

fn sweep_csv(sweep: &SweepResult, keep: &[String]) -> Result<String, CliError> {
    let traces: Vec<_> = if keep.is_empty() {
        sweep.traces.iter().collect()
    } else {
        keep.iter()
            .map(|l| {
                sweep.traces.iter().find(|t| &t.label == l).ok_or_else(|| {
                    CliError::config("outputs.observables", &format!("no observable named {l}"))
                })
            })
            .collect::<Result<_, _>>()?
    };
    let mut out = sweep.axis_name.clone();
    for t in &traces {
        out.push(',');
        out.push_str(&t.label);
    }
    out.push('\n');
    for (i, x) in sweep.axis_values.iter().enumerate() {
        out.push_str(&fmt_num(*x));
        for t in &traces {
            out.push(',');
            out.push_str(&fmt_num(t.values[i]));
        }
        out.push('\n');
    }
    Ok(out)
}

fn trace_summary(sweep: &SweepResult) -> Value {
    let mut m = serde_json::Map::new();
    for t in &sweep.traces {
        let argmax = (0..t.values.len()).max_by(|&a, &b| t.values[a].total_cmp(&t.values[b])).unwrap_or(0);
        let argmin = (0..t.values.len()).min_by(|&a, &b| t.values[a].total_cmp(&t.values[b])).unwrap_or(0);
        m.insert(
            t.label.clone(),
            json!({
                "max": t.values[argmax],
                "max_at": sweep.axis_values[argmax],
                "min": t.values[argmin],
                "min_at": sweep.axis_values[argmin],
            }),
        );
    }
    Value::Object(m)
}

fn diagonal_product(populations: &[Vec<f64>], dims: &[usize]) -> Result<DensityMatrix, CliError> {
    if populations.len() != dims.len() || populations.iter().zip(dims).any(|(p, &d)| p.len() != d) {
        return Err(CliError::config("metrics.target_state.populations", &format!("need one list per site, dims {dims:?}")));
    }
    let parts = populations
        .iter()
        .map(|p| {
            let op = Operator::from_real_diagonal(p, vec![p.len()]).map_err(numeric)?;
            DensityMatrix::new(op, "site").map_err(|e| CliError::config("metrics.target_state.populations", &e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&DensityMatrix> = parts.iter().collect();
    DensityMatrix::product(&refs, "target").map_err(numeric)
}

pub fn execute(config: &ExperimentConfig, out_dir: &Path, dt_override: Option<f64>) -> Result<RunManifest, CliError> {
    let kind = config.validate()?;
    let start = Instant::now();
    let setup = build(config, dt_override)?;
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    write_file(out_dir, &format!("{}.config.toml", config.name), &config.to_toml(), &mut files)?;
    let csv_name = format!("{}.csv", config.name);
    let Setup { system, template, cfg, omega1 } = &setup;
    let tau = config.sequence.tau.unwrap_or(0.0);

    let metrics = match kind {
        Kind::TauSweep { n } => {
            let grid = config.sequence.tau_range.expect("validated").values();
            let sweep = sweep_tau(system, template, n, &grid, cfg, Execution::Parallel).map_err(numeric)?;
            write_file(out_dir, &csv_name, &sweep_csv(&sweep, &config.outputs.observables)?, &mut files)?;
            let mut metrics = json!({ "traces": trace_summary(&sweep) });
            if let Some(r) = &config.metrics.resonances {
                let found: Vec<Value> = r
                    .windows
                    .iter()
                    .map(|&[lo, hi]| match find_resonance(&sweep.window(lo, hi), &r.label) {
                        Ok(tau) => json!({ "window": [lo, hi], "tau": tau }),
                        Err(e) => json!({ "window": [lo, hi], "error": e.to_string() }),
                    })
                    .collect();
                metrics["resonances"] = json!({ "label": r.label, "found": found });
            }
            metrics
        }
        Kind::NSweep { n_max } => {
            let mut metrics = json!({});
            let (sweep, states) = if let Some(g) = &config.metrics.gate {
                let ideal = DensityMatrix::basis(&[g.ideal_level], &[system.dims()[g.site]], "ideal")
                    .map_err(|e| CliError::config("metrics.gate", &e.to_string()))?;
                let target = GateTarget { label: g.label.clone(), site: g.site, ideal };
                let run = gate_run(system, template, tau, n_max, &target, cfg).map_err(numeric)?;
                metrics["gate"] = serde_json::to_value(&run.metrics).expect("metrics serialize");
                metrics["fit"] = serde_json::to_value(&run.fit).expect("fit serializes");
                (run.sweep, run.states)
            } else {
                let states = sweep_n_states(system, template, tau, n_max, cfg).map_err(numeric)?;
                let rows = states.iter().map(|s| system.measure(s)).collect::<Result<Vec<_>, _>>().map_err(numeric)?;
                let axis = (1..=n_max).map(|n| n as f64).collect();
                (SweepResult::from_rows("N", axis, system, rows).map_err(numeric)?, states)
            };
            write_file(out_dir, &csv_name, &sweep_csv(&sweep, &config.outputs.observables)?, &mut files)?;
            metrics["traces"] = trace_summary(&sweep);
            if let Some(t) = &config.metrics.target_state {
                let target = diagonal_product(&t.populations, system.dims())?;
                let state = &states[t.at_n - 1];
                metrics["target_state"] = json!({
                    "at_n": t.at_n,
                    "fidelity": state_fidelity(state, &target).map_err(numeric)?,
                    "root_fidelity": root_fidelity(state, &target).map_err(numeric)?,
                });
            }
            if let Some(t) = &config.metrics.tomography {
                if system.dims().iter().any(|&d| d != 2) {
                    return Err(CliError::config("metrics.tomography", "needs an all-qubit register"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                let mut csv = String::from("N,pauli,exact,measured\n");
                let mut results = Vec::new();
                for &n in &t.at_n {
                    let exact = &states[n - 1];
                    let expectations = pauli_expectations(exact).map_err(numeric)?;
                    let mut measured = expectations.clone();
                    for (label, v) in measured.iter_mut() {
                        if t.noise > 0.0 {
                            *v += rng.random_range(-t.noise..=t.noise);
                        }
                        csv.push_str(&format!("{n},{label},{},{}\n", fmt_num(expectations[label]), fmt_num(*v)));
                    }
                    let rebuilt = tomography(&measured).map_err(numeric)?;
                    let mut entry = json!({
                        "n": n,
                        "fidelity_to_exact": state_fidelity(&rebuilt, exact).map_err(numeric)?,
                    });
                    if system.dims() == [2, 2] {
                        entry["concurrence_exact"] = json!(concurrence(exact).map_err(numeric)?);
                        entry["concurrence_reconstructed"] = json!(concurrence(&rebuilt).map_err(numeric)?);
                    }
                    results.push(entry);
                }
                write_file(out_dir, &format!("{}.tomography.csv", config.name), &csv, &mut files)?;
                metrics["tomography"] = json!({ "noise": t.noise, "seed": config.seed, "states": results });
            }
            metrics
        }
        Kind::Errmap { n_max } => {
            let e = config.errmap.as_ref().expect("validated");
            let (lfs, ffs) = (e.length_factors.values(), e.freq_factors.values());
            let map = error_map(system, template, tau, n_max, &e.label, &lfs, &ffs, cfg, Execution::Parallel)
                .map_err(numeric)?;
            let mut csv = String::from("length_factor");
            for f in &ffs {
                csv.push(',');
                csv.push_str(&fmt_num(*f));
            }
            csv.push('\n');
            for (lf, row) in lfs.iter().zip(&map.cells) {
                csv.push_str(&fmt_num(*lf));
                for cell in row {
                    csv.push(',');
                    if let Some(v) = cell {
                        csv.push_str(&fmt_num(*v));
                    }
                }
                csv.push('\n');
            }
            write_file(out_dir, &csv_name, &csv, &mut files)?;
            let values: Vec<f64> = map.cells.iter().flatten().flatten().copied().collect();
            let missing = map.cells.iter().flatten().filter(|c| c.is_none()).count();
            let best = map.argmax().map(|(i, j, v)| json!({ "length_factor": lfs[i], "freq_factor": ffs[j], "value": v }));
            json!({
                "label": e.label,
                "min": values.iter().cloned().fold(f64::INFINITY, f64::min),
                "max": best,
                "missing_cells": missing,
            })
        }
        Kind::Scan { n_max } => {
            let SystemConfig::Generic(base) = &config.system else { unreachable!("validated") };
            let s = config.scan.as_ref().expect("validated");
            let pairs = coupling_scan(base, &s.couplings, template, tau, n_max, &s.label, cfg, Execution::Parallel)
                .map_err(numeric)?;
            let mut csv = String::from("azx,t_pi\n");
            for (a, t) in &pairs {
                csv.push_str(&format!("{},{}\n", fmt_num(*a), fmt_num(*t)));
            }
            write_file(out_dir, &csv_name, &csv, &mut files)?;
            let fit = fit_inverse_law(&pairs).map_err(numeric)?;
            json!({
                "c": fit.c,
                "c_over_two_pi": fit.c / std::f64::consts::TAU,
                "relative_residuals": fit.relative_residuals,
            })
        }
    };

    let manifest = RunManifest {
        name: config.name.clone(),
        config_hash: config.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        timestamp: Provenance::now().timestamp,
        dt: cfg.dt,
        omega1: *omega1,
        files,
        metrics,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(out_dir.join(format!("{}.manifest.json", config.name)), text + "\n")?;
    Ok(manifest)
}
