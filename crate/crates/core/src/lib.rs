//! Numerical laboratory for stable solutions of `(-Δ)^s u = λ f(u)` in the
//! unit ball of `R^n`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod extension;
pub mod flux;
pub mod kernel;
pub mod laplacian;
pub mod numerics;
pub mod operator;
pub mod profile;
pub mod quad;
pub mod regimes;
pub mod solver;
pub mod stability;
pub mod verify;

pub use error::{FracError, Result};
pub use numerics::{log_gamma, normalizations, Normalizations, Params};
pub use profile::{Getoor, GridSpec, RadialFunction, RadialProfile, SmoothBump};
