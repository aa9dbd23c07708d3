//! CPMG and XYN pulse trains compiled into timed elements.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::DrivePulse;

/// Drive phase of x-axis pulses.
pub const X_PHASE: f64 = 0.0;
/// Drive phase of y-axis pulses under the cos(2πωp·t + φ) drive.
pub const Y_PHASE: f64 = -FRAC_PI_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Cpmg,
    Xyn,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Cpmg => "CPMG",
            Family::Xyn => "XYN",
        }
    }
}

/// How the closing wrapper is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosingRule {
    /// Always a π/2 pulse at the wrapper phase.
    #[default]
    HalfPi,
    /// XYN trains with an odd number of pulse pairs close with a 3π/2 pulse.
    SignPreserving,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Angle {
    HalfPi,
    Pi,
    ThreeHalvesPi,
}

impl Angle {
    /// Duration relative to a π pulse.
    pub fn fraction_of_pi(self) -> f64 {
        match self {
            Angle::HalfPi => 0.5,
            Angle::Pi => 1.0,
            Angle::ThreeHalvesPi => 1.5,
        }
    }

    pub fn radians(self) -> f64 {
        self.fraction_of_pi() * PI
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SequenceElement {
    Delay { duration: f64 },
    Pulse { pulse: DrivePulse, angle: Angle },
}

impl SequenceElement {
    pub fn duration(&self) -> f64 {
        match self {
            SequenceElement::Delay { duration } => *duration,
            SequenceElement::Pulse { pulse, .. } => pulse.duration,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSequence {
    pub elements: Vec<SequenceElement>,
    pub family: Family,
    pub n_pulses: usize,
    pub tau: f64,
    pub error_length_factor: f64,
    pub error_freq_factor: f64,
    /// The error-free π pulse the sequence was built from.
    pub pi_pulse: DrivePulse,
    pub wrapper_phase: f64,
    pub closing: ClosingRule,
}

impl PulseSequence {
    pub fn total_duration(&self) -> f64 {
        self.elements.iter().map(SequenceElement::duration).sum()
    }

    pub fn pi_count(&self) -> usize {
        self.elements
            .iter()
            .filter(|e| matches!(e, SequenceElement::Pulse { angle: Angle::Pi, .. }))
            .count()
    }

    pub fn pulses(&self) -> impl Iterator<Item = (&DrivePulse, Angle)> {
        self.elements.iter().filter_map(|e| match e {
            SequenceElement::Pulse { pulse, angle } => Some((pulse, *angle)),
            SequenceElement::Delay { .. } => None,
        })
    }

    /// Shortest π-pulse duration in the sequence.
    pub fn min_pi_duration(&self) -> f64 {
        self.pulses()
            .filter(|(_, a)| *a == Angle::Pi)
            .map(|(p, _)| p.duration)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Phase of the k-th π pulse (0-based).
pub fn pi_phase(family: Family, k: usize) -> f64 {
    match family {
        Family::Cpmg => X_PHASE,
        Family::Xyn if k % 2 == 1 => Y_PHASE,
        Family::Xyn => X_PHASE,
    }
}

/// Closing wrapper angle for an n-pulse train.
pub fn closing_angle(family: Family, n: usize, rule: ClosingRule) -> Angle {
    match (rule, family) {
        (ClosingRule::SignPreserving, Family::Xyn) if (n / 2) % 2 == 1 => Angle::ThreeHalvesPi,
        _ => Angle::HalfPi,
    }
}

/// Everything needed to compile a train for any (N, τ).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceTemplate {
    pub family: Family,
    pub pi_pulse: DrivePulse,
    pub wrapper_phase: f64,
    pub closing: ClosingRule,
    pub length_factor: f64,
    pub freq_factor: f64,
}

impl SequenceTemplate {
    pub fn new(family: Family, pi_pulse: DrivePulse) -> Self {
        Self {
            family,
            pi_pulse,
            wrapper_phase: Y_PHASE,
            closing: ClosingRule::HalfPi,
            length_factor: 1.0,
            freq_factor: 1.0,
        }
    }

    pub fn with_closing(mut self, closing: ClosingRule) -> Self {
        self.closing = closing;
        self
    }

    pub fn with_wrapper_phase(mut self, phase: f64) -> Self {
        self.wrapper_phase = phase;
        self
    }

    pub fn with_errors(mut self, length_factor: f64, freq_factor: f64) -> Self {
        self.length_factor = length_factor;
        self.freq_factor = freq_factor;
        self
    }

    pub fn compile(&self, n: usize, tau: f64) -> Result<PulseSequence> {
        let base = compile(self.family, n, tau, &self.pi_pulse, self.wrapper_phase, self.closing)?;
        if self.length_factor == 1.0 && self.freq_factor == 1.0 {
            Ok(base)
        } else {
            inject_errors(&base, self.length_factor, self.freq_factor)
        }
    }
}

fn pulse_at(pi: &DrivePulse, angle: Angle, phase: f64) -> SequenceElement {
    SequenceElement::Pulse {
        pulse: DrivePulse { phase, duration: pi.duration * angle.fraction_of_pi(), ..*pi },
        angle,
    }
}

fn checked_delay(duration: f64, what: &str) -> Result<SequenceElement> {
    // tolerate round-off when a gap closes exactly
    if duration < -1e-12 {
        return Err(Error::Timing(format!("{what} delay is negative ({duration:.6e}); tau too small for the pulses")));
    }
    Ok(SequenceElement::Delay { duration: duration.max(0.0) })
}

/// Builds the element list from an actual (possibly error-scaled) π pulse.
fn build(
    family: Family,
    n: usize,
    tau: f64,
    pi: &DrivePulse,
    wrapper_phase: f64,
    closing: ClosingRule,
) -> Result<Vec<SequenceElement>> {
    if n == 0 {
        return Err(Error::InvalidParameter("a train needs at least one π pulse".into()));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    pi.validate()?;
    let t_pi = pi.duration;
    let t_open = t_pi * Angle::HalfPi.fraction_of_pi();
    let close = closing_angle(family, n, closing);
    let t_close = t_pi * close.fraction_of_pi();
    let interior = tau - t_pi;
    if interior <= 0.0 {
        return Err(Error::Timing(format!("interior delay tau − t_pi = {interior:.6e} must be positive")));
    }

    let mut elements = Vec::with_capacity(2 * n + 3);
    elements.push(pulse_at(pi, Angle::HalfPi, wrapper_phase));
    elements.push(checked_delay(tau / 2.0 - t_pi / 2.0 - t_open / 2.0, "opening edge")?);
    for k in 0..n {
        if k > 0 {
            elements.push(SequenceElement::Delay { duration: interior });
        }
        elements.push(pulse_at(pi, Angle::Pi, pi_phase(family, k)));
    }
    elements.push(checked_delay(tau / 2.0 - t_pi / 2.0 - t_close / 2.0, "closing edge")?);
    elements.push(pulse_at(pi, close, wrapper_phase));
    Ok(elements)
}

fn compile(
    family: Family,
    n: usize,
    tau: f64,
    pi_pulse: &DrivePulse,
    wrapper_phase: f64,
    closing: ClosingRule,
) -> Result<PulseSequence> {
    Ok(PulseSequence {
        elements: build(family, n, tau, pi_pulse, wrapper_phase, closing)?,
        family,
        n_pulses: n,
        tau,
        error_length_factor: 1.0,
        error_freq_factor: 1.0,
        pi_pulse: DrivePulse { phase: 0.0, ..*pi_pulse },
        wrapper_phase,
        closing,
    })
}

/// π/2 · [delay · π_x]^N · delay · closing wrapper.
pub fn compile_cpmg(
    n: usize,
    tau: f64,
    pi_pulse: &DrivePulse,
    wrapper_phase: f64,
    closing: ClosingRule,
) -> Result<PulseSequence> {
    compile(Family::Cpmg, n, tau, pi_pulse, wrapper_phase, closing)
}

/// CPMG timing with π-pulse axes alternating x, y, x, y, ….
pub fn compile_xyn(
    n: usize,
    tau: f64,
    pi_pulse: &DrivePulse,
    wrapper_phase: f64,
    closing: ClosingRule,
) -> Result<PulseSequence> {
    compile(Family::Xyn, n, tau, pi_pulse, wrapper_phase, closing)
}

/// Scales every pulse duration and carrier, keeping π-pulse centres τ apart.
pub fn inject_errors(seq: &PulseSequence, length_factor: f64, freq_factor: f64) -> Result<PulseSequence> {
    for (name, f) in [("length", length_factor), ("frequency", freq_factor)] {
        if !(f > 0.0 && f < 2.0) {
            return Err(Error::InvalidParameter(format!("{name} error factor {f} outside (0, 2)")));
        }
    }
    let lf = seq.error_length_factor * length_factor;
    let ff = seq.error_freq_factor * freq_factor;
    let actual = DrivePulse {
        duration: seq.pi_pulse.duration * lf,
        omegap: seq.pi_pulse.omegap * ff,
        ..seq.pi_pulse
    };
    Ok(PulseSequence {
        elements: build(seq.family, seq.n_pulses, seq.tau, &actual, seq.wrapper_phase, seq.closing)?,
        error_length_factor: lf,
        error_freq_factor: ff,
        ..seq.clone()
    })
}
