//! Multi-threaded Monte Carlo, experiment configuration and command-line
//! front end for [`keyruin_core`].

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
mod error;
pub mod parallel;

pub use config::{Command, ExperimentConfig, LoadedConfig};
pub use error::{CliError, ConfigError};
pub use keyruin_core as core;
