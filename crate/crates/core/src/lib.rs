// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod flows;
pub mod integrator;
pub mod objectives;
pub mod report;
pub mod timescale;

pub use error::{Error, Result};
