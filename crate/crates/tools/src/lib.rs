//! Parallel ensembles, configuration, file output and the `sdecontract` CLI.

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod parallel;
pub mod presets;
pub mod rational;

pub use error::CliError;
