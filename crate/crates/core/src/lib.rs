//! Weyl-type solutions of `y' - x^{-1} A y - q(x) y = rho B y` on the half line.
//!
//! The construction goes through fundamental tensors: minimal-growth
//! solutions of the exterior-power lifts of the system, obtained from
//! Volterra integral equations and then combined algebraically.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
#[cfg(test)]
pub(crate) mod fixtures;
pub mod io;
pub mod linalg;
pub mod ode;
pub mod oracle;
pub mod potential;
pub mod tensor_algebra;
pub mod unperturbed;
pub mod volterra;
pub mod weyl;

pub use error::{Error, Result};
