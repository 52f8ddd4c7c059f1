//! Numerical toolkit for a near-confocal superconducting millimeter-wave
//! Fabry-Perot cavity: post-paraxial mode-spectrum prediction, geometry
//! fitting from spectra, superconductor loss budgets, S21 and ringdown
//! measurement analysis, optical-access design exploration, and cavity-QED
//! figures of merit including a Tavis-Cummings iSWAP gate simulator.
//!
//! Unit conventions are documented in [`core`]: file- and CLI-facing
//! frequencies are Hz; all in-formula rates and angular frequencies are
//! rad/s.

// validation uses `!(x > 0.0)` so NaN inputs are rejected along with
// out-of-range ones
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod core;
pub mod design;
pub mod error;
pub mod cqed;
pub mod fit;
pub mod geomfit;
pub mod linalg;
pub mod loss;
pub mod measurement;
pub mod quad;
pub mod spectrum;

pub use error::{Error, Result};
