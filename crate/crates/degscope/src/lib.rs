//! File formats, reports, parallel execution and the experiment pipeline
//! around `degscope-core`.
//!
//! The `degscope` binary is a thin wrapper over [`cli::run`]; every
//! subcommand is also callable as a library function in [`commands`] and
//! [`pipeline`], writing the same files.

pub mod analysis;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod embfile;
pub mod error;
pub mod exec;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use exec::RayonExecutor;
pub use manifest::{Run, RunManifest};
