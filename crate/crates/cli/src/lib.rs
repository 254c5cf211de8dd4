//! Command-line front end for the capillary solver: TOML run configs, the
//! `solve`, `verify`, `oracle`, `sweep` and `selftest` commands, and their
//! CSV and JSON outputs.
//!
//! Exit status: 0 on success, 1 for configuration, range and grid errors,
//! 2 when continuation stalls, 3 when a residual or audit check fails.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_oracle, cmd_selftest, cmd_solve, cmd_sweep, cmd_verify, Options};
pub use config::{Command, PhiSpec, RunConfig};
pub use error::CliError;
