//! Command-line surface: run configs, the use-case pipeline and subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod pipeline;

pub use config::{BenchConfig, DataConfig, RunConfig, UsecaseConfig};
