//! Global pseudo-differential calculus generated by a model boundary-value
//! operator with discrete biorthogonal spectrum.

// NaN must fail the guards, so `!(x > 0.0)` is intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calculus;
pub mod cli;
pub mod error;
pub mod evolve;
pub mod model;
pub mod quantize;
pub mod symbols;
pub mod transform;

pub use error::{Error, Result};
