//! Batch front end for the race-dde analyses.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod chart;
pub mod error;
pub mod run;

pub use args::Cli;
pub use error::CliError;
