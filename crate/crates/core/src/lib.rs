//! Radial solver and verification toolkit for the Schrödinger–Born–Infeld
//! system
//!
//! ```text
//! -Δu + u + φu = f(u) + μ|u|⁴u,    -div(∇φ / √(1-|∇φ|²)) = u²   in ℝ³
//! ```
//!
//! restricted to radial functions.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod born_infeld;
pub mod config;
pub mod bubbles;
pub mod energy;
pub mod grid;
pub mod linalg;
pub mod mountain_pass;
pub mod nonlinearity;
pub mod quadrature;
pub mod run;

pub use error::{Error, Result};
pub use grid::{build_grid, deriv, integrate, norm, GridSpec, NormKind, RadialField, RadialGrid};
