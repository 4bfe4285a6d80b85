//! Command-line harness around the `moment_density` library: fitting
//! sample files, Monte Carlo experiments on known truths, error bounds,
//! and CSV, JSON and SVG outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod plot;
pub mod report;

pub use commands::{run, Cli};
pub use error::{CliError, Result};
