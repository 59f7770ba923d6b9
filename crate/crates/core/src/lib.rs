//! Length-weighted Sobolev metrics on closed plane and space curves.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod completeness;
pub mod counterexample;
pub mod curve;
pub mod error;
pub mod grid;
pub mod io;
pub mod metric;
pub mod paths;
pub mod quadrature;
pub mod random;
pub mod verify;

pub use error::{Error, Result};
