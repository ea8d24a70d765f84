//! Numerical workbench for the scattering pseudodifferential calculus.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flow;
pub mod grid;
pub mod helmholtz;
pub mod ode;
pub mod quad;
pub mod radon;
pub mod report;
pub mod runner;
pub mod scatter1d;
pub mod symbol;

pub use error::{Error, Result};
pub use num_complex::Complex64;
