//! Numerical toolkit for impulsive Hilfer-type fractional evolution problems.

// `!(x < y)` is used on purpose so that NaN fails validation checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod expr;
pub mod fracops;
pub mod gronwall;
pub mod model;
pub mod par;
pub mod quad;
pub mod solver;
pub mod specfun;
pub mod stability;
pub mod trajectory;

pub use error::{Error, Result};
