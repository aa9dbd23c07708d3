//! Experiment configuration files (TOML).

use ddgate::{CarrierPhase, ClosingRule, Family, GenericSystemParams, InitialState, NvParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub system: SystemConfig,
    #[serde(default)]
    pub initial_state: InitialState,
    pub sequence: SequenceConfig,
    pub sim: SimSection,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub metrics: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errmap: Option<ErrmapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    /// Only the noisy tomography demonstration draws random numbers.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SystemConfig {
    Generic(GenericSystemParams),
    Nv(NvParams),
}

/// Evenly spaced grid `start, start + step, …` up to `stop` inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.start + k as f64 * self.step).collect()
    }

    fn check(&self, field: &str) -> Result<(), CliError> {
        let ok = self.start.is_finite() && self.stop.is_finite() && self.step > 0.0 && self.stop >= self.start;
        if !ok {
            return Err(CliError::config(field, "needs finite start ≤ stop and step > 0"));
        }
        if (self.stop - self.start) / self.step > 1e6 {
            return Err(CliError::config(field, "more than a million grid points"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Largest N of an N-sweep starting at 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_range: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_range: Option<Range>,
    pub pulse: PulseConfig,
    #[serde(default)]
    pub errors: ErrorFactors,
    #[serde(default)]
    pub closing: ClosingRule,
    /// Wrapper pulse phase in radians; defaults to the y axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrapper_phase: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    /// Rabi amplitude; omit together with `calibrate = true`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega1: Option<f64>,
    /// π-pulse duration; defaults to 1/(2·omega1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_pi: Option<f64>,
    /// Carrier; defaults to the system's central transition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omegap: Option<f64>,
    /// Find omega1 numerically so that `t_pi` is a π pulse.
    #[serde(default)]
    pub calibrate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorFactors {
    pub length_factor: f64,
    pub freq_factor: f64,
}

impl Default for ErrorFactors {
    fn default() -> Self {
        Self { length_factor: 1.0, freq_factor: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// dt as a fraction of the π-pulse duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_pi: Option<u32>,
    #[serde(default)]
    pub carrier_phase: CarrierPhase,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// Subset of observables written to the CSV; all when empty.
    #[serde(default)]
    pub observables: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonances: Option<ResonanceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_state: Option<TargetStateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tomography: Option<TomographySpec>,
}

/// Gate metrics on an N-sweep; the ideal final target state is a basis level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub label: String,
    pub site: usize,
    pub ideal_level: usize,
}

/// Peaks of one trace of a τ-sweep, one per window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceSpec {
    pub label: String,
    pub windows: Vec<[f64; 2]>,
}

/// Fidelity at one N to a diagonal product state, one population list per site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetStateSpec {
    pub at_n: usize,
    pub populations: Vec<Vec<f64>>,
}

/// Pauli tomography of the register at selected N, with uniform noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySpec {
    pub at_n: Vec<usize>,
    #[serde(default)]
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrmapConfig {
    pub label: String,
    pub length_factors: Range,
    pub freq_factors: Range,
}

/// T_π versus coupling for a single-target generic register.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub label: String,
    pub couplings: Vec<f64>,
}

/// What a config asks the runner to do.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    NSweep { n_max: usize },
    TauSweep { n: usize },
    Errmap { n_max: usize },
    Scan { n_max: usize },
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn kind(&self) -> Result<Kind, CliError> {
        let s = &self.sequence;
        let needs_tau = |k: Kind| match (s.tau, s.tau_range) {
            (Some(_), None) => Ok(k),
            _ => Err(CliError::config("sequence.tau", "N-sweeps need a single tau and no tau_range")),
        };
        let n_max = |what: &str| {
            s.n_range.ok_or_else(|| CliError::config("sequence.n_range", &format!("{what} needs n_range")))
        };
        match (self.errmap.is_some(), self.scan.is_some()) {
            (true, true) => Err(CliError::config("errmap", "errmap and scan are exclusive")),
            (true, false) => needs_tau(Kind::Errmap { n_max: n_max("errmap")? }),
            (false, true) => needs_tau(Kind::Scan { n_max: n_max("scan")? }),
            (false, false) => match (s.n_range, s.tau_range) {
                (Some(_), Some(_)) | (None, None) => {
                    Err(CliError::config("sequence", "set exactly one of n_range and tau_range"))
                }
                (Some(n_max), None) => needs_tau(Kind::NSweep { n_max }),
                (None, Some(_)) => match (s.n, s.tau) {
                    (Some(n), None) => Ok(Kind::TauSweep { n }),
                    _ => Err(CliError::config("sequence.n", "tau sweeps need n and no tau")),
                },
            },
        }
    }

    /// Schema and range checks that do not need any simulation.
    pub fn validate(&self) -> Result<Kind, CliError> {
        let kind = self.kind()?;
        match &self.system {
            SystemConfig::Generic(p) => p.validate().map_err(|e| CliError::config("system", &e.to_string()))?,
            SystemConfig::Nv(p) => p.validate().map_err(|e| CliError::config("system", &e.to_string()))?,
        }
        let s = &self.sequence;
        if let Some(r) = &s.tau_range {
            r.check("sequence.tau_range")?;
        }
        if matches!(s.n_range, Some(0)) || matches!(s.n, Some(0)) {
            return Err(CliError::config("sequence.n", "pulse counts start at 1"));
        }
        if let Some(tau) = s.tau {
            if !(tau > 0.0) {
                return Err(CliError::config("sequence.tau", "must be positive"));
            }
        }
        let p = &s.pulse;
        match (p.calibrate, p.omega1, p.t_pi) {
            (true, None, Some(t)) if t > 0.0 => {}
            (true, _, _) => return Err(CliError::config("sequence.pulse", "calibrate needs t_pi > 0 and no omega1")),
            (false, Some(w), _) if w > 0.0 => {}
            (false, _, _) => return Err(CliError::config("sequence.pulse.omega1", "must be positive")),
        }
        if p.t_pi.is_some_and(|t| !(t > 0.0)) {
            return Err(CliError::config("sequence.pulse.t_pi", "must be positive"));
        }
        for (name, f) in [("length_factor", s.errors.length_factor), ("freq_factor", s.errors.freq_factor)] {
            if !(f > 0.0 && f < 2.0) {
                return Err(CliError::config(&format!("sequence.errors.{name}"), "must lie in (0, 2)"));
            }
        }
        match (self.sim.dt, self.sim.steps_per_pi) {
            (Some(dt), None) if dt > 0.0 => {}
            (None, Some(k)) if k > 0 => {}
            _ => return Err(CliError::config("sim", "set exactly one of dt > 0 and steps_per_pi > 0")),
        }
        if let Some(e) = &self.errmap {
            e.length_factors.check("errmap.length_factors")?;
            e.freq_factors.check("errmap.freq_factors")?;
        }
        if let Some(scan) = &self.scan {
            let single = matches!(&self.system, SystemConfig::Generic(p) if p.targets.len() == 1);
            if !single || scan.couplings.is_empty() {
                return Err(CliError::config("scan", "needs a single-target generic system and couplings"));
            }
        }
        let is_n_sweep = matches!(kind, Kind::NSweep { .. });
        let m = &self.metrics;
        if !is_n_sweep && (m.gate.is_some() || m.target_state.is_some() || m.tomography.is_some()) {
            return Err(CliError::config("metrics", "gate, target_state and tomography need an N-sweep"));
        }
        if m.resonances.is_some() && !matches!(kind, Kind::TauSweep { .. }) {
            return Err(CliError::config("metrics.resonances", "needs a tau sweep"));
        }
        let n_max = if let Kind::NSweep { n_max } = kind { n_max } else { 0 };
        if let Some(t) = &m.target_state {
            if t.at_n == 0 || t.at_n > n_max {
                return Err(CliError::config("metrics.target_state.at_n", "outside the N range"));
            }
        }
        if let Some(t) = &m.tomography {
            if t.at_n.iter().any(|&n| n == 0 || n > n_max) {
                return Err(CliError::config("metrics.tomography.at_n", "outside the N range"));
            }
            if !(0.0..=1.0).contains(&t.noise) {
                return Err(CliError::config("metrics.tomography.noise", "must lie in [0, 1]"));
            }
        }
        Ok(kind)
    }

    /// sha256 of the config with its name and description blanked.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.name.clear();
        canonical.description.clear();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[system]
kind = "generic"
omega00 = 50.0
targets = [{ omega0 = 1.0, azx = 0.1 }]
[sequence]
family = "cpmg"
n_range = 20
tau = 0.5
pulse = { omega1 = 5.0 }
[sim]
dt = 0.001
"#;

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.validate().unwrap(), Kind::NSweep { n_max: 20 });
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn hash_ignores_names_only() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        let mut renamed = cfg.clone();
        renamed.name = "other".into();
        renamed.description = "words".into();
        assert_eq!(cfg.hash(), renamed.hash());
        let mut changed = cfg.clone();
        changed.sequence.tau = Some(0.51);
        assert_ne!(cfg.hash(), changed.hash());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("dt = 0.001", "dt = 0.001\nstep = 2");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("step"), "{err}");
    }

    #[test]
    fn both_axes_are_rejected() {
        let text = MINIMAL.replace("tau = 0.5", "tau = 0.5\ntau_range = { start = 0.3, stop = 0.4, step = 0.01 }");
        let err = ExperimentConfig::parse(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("sequence"));
    }

    #[test]
    fn range_includes_the_end_point() {
        let r = Range { start: 0.97, stop: 1.03, step: 0.01 };
        assert_eq!(r.values().len(), 7);
        assert_eq!(Range { start: 0.3, stop: 3.8, step: 0.01 }.values().len(), 351);
    }
}
