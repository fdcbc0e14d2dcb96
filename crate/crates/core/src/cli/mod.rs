//! Command-line front end: configuration, orchestration and artifacts.

pub mod config;
pub mod run;

pub use config::RunConfig;
pub use run::{execute, run, write_artifacts, Diagnostics, RunOutput};
