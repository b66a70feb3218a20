//! Experiment runner for `fwa-core`: config parsing, seed sweeps, CSV outputs and
//! majority-over-seeds ordering checks.

pub mod checks;
pub mod commands;
pub mod config;
pub mod prepare;

pub use config::ExperimentConfig;
