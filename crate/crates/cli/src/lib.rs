//! Command-line harness: configuration, subcommands and the single-neuron
//! demonstration.

pub mod commands;
pub mod config;
pub mod demo;
pub mod error;

pub use commands::{run_experiment, Command};
pub use config::{DatasetSource, ExperimentConfig};
pub use demo::{run_single_neuron_demo, DemoConfig, DemoResult};
pub use error::{exit, CliError, Result};
