//! Simulation and analysis of finite grapheme dynamics.
//!
//! States are finite vertex sets partitioned into completely connected
//! components (optionally pruned by edge flips), evolving by resampling,
//! birth/death, immigration/emigration, mutation and selection, with the full
//! genealogy of every vertex retained.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dual;
pub mod dynamics;
pub mod equilibria;
pub mod estimators;
pub mod error;
pub mod genealogy;
pub mod generator;
pub mod graphon;
pub mod polynomial;
pub mod record;
pub mod rng;
pub mod state;

pub use error::{GraphemeError, Result};
