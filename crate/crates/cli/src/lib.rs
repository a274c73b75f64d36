//! Experiment driver behind the `cookiewalk` binary.
//!
//! The library half exists so the pieces stay testable without spawning
//! processes: [`config`] assembles an [`config::ExperimentConfig`] from a
//! flat key/value file plus command-line overrides, [`experiment`] turns a
//! config into an [`report::EnsembleReport`] as a pure function of the
//! master seed, and [`report`] renders the report as CSV or JSON. The binary
//! in `main.rs` only parses flags, calls these three, and maps errors to
//! exit codes.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{ExperimentConfig, FlagOverrides, OutFormat, Subcommand};
pub use experiment::run_experiment;
pub use report::{emit_report, EnsembleReport};
