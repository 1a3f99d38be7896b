//! Analysis and simulation of two-country arms-race models with reaction delay.
//!
//! - [`model`]: armament matrices, hostility coefficients, coefficient signals, histories.
//! - [`dde`]: fixed-step method-of-steps integrator with dense output.
//! - [`autonomous`]: stability threshold, bifurcation ladder and characteristic roots of `X' = A X(t-τ)`.
//! - [`hopf`]: normal-form coefficients at the ladder points.
//! - [`criteria`]: checkable stability criteria for the time-varying model.
//! - [`special`]: the special-solutions reduction for `x' = A(t) x(t-τ)` in any dimension.
//! - [`io`]: the JSON model document.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autonomous;
pub mod criteria;
pub mod dde;
pub mod error;
pub mod hopf;
pub mod io;
pub mod model;
pub mod special;

pub use error::{Error, Result};
