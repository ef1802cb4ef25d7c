//! Operator commands for the navigation harness: run episode sets, evaluate
//! and replay traces, validate episode sets and serve the simulator protocol.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{Overrides, PolicySpec, RunConfig, SimulatorSpec};
pub use error::CliError;
