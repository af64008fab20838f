//! Simulation of square-root diffusions with the drift-implicit
//! square-root Euler scheme, plus Monte Carlo diagnostics.

// `!(x > 0.0)` style guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod model;
pub mod paths;
pub mod quadrature;
pub mod schemes;

pub use error::{Error, Result};
