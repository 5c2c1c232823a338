//! Forward simulation and point-source reconstruction for the time-fractional
//! subdiffusion equation `ρ ∂ₜᵅu + 𝒜u = Σₖ λₖ(t) δ_{xₖ}` on intervals and the
//! unit square.

// Index loops mirror the element formulas; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod fem;
pub mod forward;
pub mod fractional;
pub mod inverse;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
