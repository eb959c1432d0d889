//! Simulation of a DC-autotransformer multilevel inverter.
//!
//! A string of `M` series capacitors across a DC source is tapped to give
//! `M + 1` voltage levels. Each capacitor is coupled to a shared transformer
//! core through an H-bridge; square-wave switching of all bridges in phase
//! keeps the capacitor voltages equal. A tap selector plus a PWM switch
//! between adjacent taps synthesises the output.
//!
//! Modules, bottom up:
//!
//! * [`topology`]: configuration, nominal tap ladder, fault bypass, device counts.
//! * [`modulation`]: bridge phase, tap selection, PWM, gate-drive waveform.
//! * [`circuit`]: state vector and derivatives of the plant and gate driver.
//! * [`engine`]: fixed-step simulation of scenarios and of the gate driver.
//! * [`analysis`]: THD, tracking error, losses, balancing metrics, run report.
//! * [`sweep`]: parameter sweeps, parallel with the `parallel` feature.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod circuit;
pub mod engine;
pub mod error;
pub mod integrator;
pub mod modulation;
pub mod scenarios;
pub mod sweep;
pub mod topology;

pub use error::{Error, Result};
