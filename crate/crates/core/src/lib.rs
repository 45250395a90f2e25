//! Discrete Schrödinger operators on lattices and graphs, eigenfunction
//! localization diagnostics, and dynamical-localization checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod counterexamples;
pub mod diagnostics;
pub mod dynamics;
pub mod ensemble;
pub mod envelope;
pub mod error;
pub mod geometry;
pub mod numeric;
pub mod operators;
pub mod spectral;

pub use error::{Error, Result};
