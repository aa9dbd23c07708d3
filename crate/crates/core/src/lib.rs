//! Laboratory-frame simulation of dynamical-decoupling mediated gates between
//! a driven central spin and weakly coupled target spins.
//!
//! Frequencies are ordinary (not angular): propagators are exp(−i2π·t·H).
//! The central spin is always site 0.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod algebra;
pub mod analysis;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod hamiltonians;
pub mod parallel;
pub mod sequences;
pub mod system;

pub use algebra::{
    eig_hermitian, embed, herm_propagator, partial_trace, spin_ops, tensor, DensityMatrix, Operator, SpinOperators,
    Spectrum, C64,
};
pub use analysis::{GateMetrics, SweepResult, Trace};
pub use error::{Error, Result};
pub use evolution::{apply_sequence, pulse_propagator, sweep_n, sweep_tau, CarrierPhase, SimConfig};
pub use hamiltonians::{DrivePulse, GenericSystemParams, NvParams};
pub use parallel::Execution;
pub use sequences::{ClosingRule, Family, PulseSequence, SequenceTemplate};
pub use system::{InitialState, SpinSystem};
