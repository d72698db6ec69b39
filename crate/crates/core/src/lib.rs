//! Fidelity susceptibility of the disordered quantum XY chain.
//!
//! The chain is handled in its quasi-free fermion form: a realization of
//! random fields and anisotropies fixes the coupling matrices `A` and `B`,
//! and the ground-state geometry lives entirely in the orthogonal polar
//! factor `T` of `Z = A - B`. On top of that the crate provides
//!
//! * [`model`]: disorder sampling and the coupling matrices,
//! * [`spectral`]: polar decomposition, single-particle gap,
//! * [`fidelity`]: determinant fidelity and three susceptibility estimators,
//! * [`ensemble`]: reproducible disorder ensembles and their statistics,
//! * [`scaling`]: finite-size scaling, self-averaging, Griffiths extent and
//!   distribution collapse,
//! * [`oracle`]: brute-force Fock-space reference for small chains,
//! * [`scan`]: declarative parameter scans with CSV and manifest output.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod fidelity;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod scaling;
pub mod scan;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{ChainSpec, CouplingMatrices, Direction, DisorderRealization};
