//! Simulation and analysis of two Rydberg atoms coupled at a Förster resonance.
//!
//! The crate models the pair basis `{|gg⟩, |d̃g⟩, |dd⟩, |p̃f⟩}` with a
//! Stark-tuned Förster defect and a resonant `C3/R³` exchange coupling, propagates
//! it exactly through piecewise-constant pulse sequences, adds shot-to-shot
//! noise and projective sampling, and fits the resulting spectra and
//! oscillation traces.
//!
//! Units throughout: energies are `E/h` in MHz, times in µs, distances in µm,
//! fields in mV/cm and `C3` in MHz·µm³.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dynamics;
mod error;
pub mod experiments;
pub mod output;
pub mod pair;
pub mod stochastic;

pub use error::{Error, Result};
pub use pair::{Geometry, HamiltonianMatrix, PairBasis, PhysicalParams};
