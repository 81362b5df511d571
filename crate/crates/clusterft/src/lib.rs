//! Simulation and verification toolkit for fault-tolerant cluster-state
//! (measurement-based) quantum computation.
//!
//! The crate provides, at desk scale:
//!
//! - an operator-norm error-strength measure between ideal and noisy
//!   unitaries, with its chaining / repartition / commutation properties
//!   ([`error_strength`]);
//! - constructive unitary extension theorems ([`unitary_extension`]);
//! - a little-endian state-vector simulator ([`simulator`]);
//! - cluster-state preparation, adaptive measurement with byproduct
//!   tracking, and Z-deletion ([`cluster`]);
//! - a compiler from circuits to cluster graphs and measurement schedules
//!   ([`compiler`]);
//! - coherent feedforward blocks and their circuit identities ([`blocks`]);
//! - strength-calibrated unitary noise with per-level environments
//!   ([`noise`]);
//! - non-deterministic-gate cluster growth and the optical threshold
//!   formulas ([`optical`]);
//! - end-to-end noisy pipeline runs and the CLI surface ([`pipeline`]).
//!
//! See the book under `book/` for a guided tour, and the `clusterft`
//! binary for the command-line interface.

pub mod blocks;
pub mod cluster;
pub mod compiler;
pub mod error;
pub mod error_strength;
pub mod linalg;
pub mod noise;
pub mod optical;
pub mod pipeline;
pub mod simulator;
pub mod unitary_extension;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, SubspaceBasis};
pub use simulator::{Distribution, StateVector};
