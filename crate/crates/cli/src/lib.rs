//! Experiment runner: reads a TOML experiment file, runs the self-tests, the
//! bound-ordering study and the three applications, and writes CSV tables,
//! log-log SVG plots, a JSON summary and a run manifest.
//!
//! Exit codes: `0` when every check passes, `1` when a check fails (details
//! in `failures.json`), `2` when the configuration is rejected. Nothing is
//! written in the last case.

pub mod config;
pub mod experiments;
pub mod output;
pub mod report;
mod runner;

pub use runner::{resolve_threads, run, run_experiment, Cli, Command, EXIT_CONFIG, EXIT_FAILED, EXIT_OK, SCHEMA, THREADS_ENV};
