//! Discontinuous Galerkin solver for variable-density shallow water flow
//! carrying solute constituents, on uniform rectangular grids.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too; nodal loops
// index several parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod limiters;
pub mod physics;
pub mod quadrature;
pub mod scenarios;
pub mod state;

pub use error::{Error, Result};
