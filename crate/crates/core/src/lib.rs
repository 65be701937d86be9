//! Numerical laboratory for the periodic defocusing NLS equation
//! `i u_t = -u_xx + 2|u|^2 u` on the unit circle.
//!
//! The crate couples a split-step pseudospectral solver with a
//! Zakharov–Shabat spectral pipeline (monodromy, periodic spectrum,
//! contour normalization of the `ψ_n` functions) that yields the NLS
//! frequencies from spectral data alone, and compares the true flow with
//! the nearly linear flows built from those frequencies.

// `!(x > y)` rejects NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod compare;
pub mod error;
pub mod field;
pub mod flow;
pub mod frequencies;
pub mod harness;
pub mod normalization;
pub mod output;
pub mod scenario;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{Potential, SpectralGrid, StateField};
pub use flow::Trajectory;
pub use frequencies::FrequencyTable;
pub use normalization::SigmaSet;
pub use spectral::{GapTable, MonodromyMatrix};
