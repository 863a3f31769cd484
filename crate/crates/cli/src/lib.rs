//! Batch driver for the safe-speed pipeline: `synth`, `prepare`, `train`,
//! `recommend` and `evaluate`, all configured from one TOML file.
// NaN-rejecting range checks read as `!(x >= lo)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Command};
pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
