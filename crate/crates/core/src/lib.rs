//! Numerical toolkit for dimensions of self-similar measures and their
//! projections: symbolic dynamics, exact measures, similarity IFS,
//! multifractal spectra, empirical dimension estimators and projection
//! experiments.

// `!(x > 0.0)` is deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod csv;
pub mod dimest;
pub mod error;
pub mod ifs;
pub mod measures;
pub mod multifractal;
pub mod par;
pub mod projections;
pub mod symbolic;
pub mod verify;

pub use error::{Error, Result};

/// Default cap on the number of cylinders an exhaustive routine may visit.
pub const DEFAULT_BUDGET: usize = 1 << 22;

/// Cylinder enumeration budget; `FRACTDIM_BUDGET` overrides the default.
pub fn budget() -> usize {
    std::env::var("FRACTDIM_BUDGET")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_BUDGET)
}
