//! Command-line front end for `renewal-core`: scenario files in, CSV
//! trajectories and JSON summaries out.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use config::Scenario;
pub use error::{CliError, Status};
