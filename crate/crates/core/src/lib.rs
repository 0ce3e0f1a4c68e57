//! Numerical laboratory for pointwise estimates of obstacle problems with
//! Orlicz growth and measure data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod orlicz;
pub mod potentials;
pub mod solver;

pub use error::{Error, Result};
