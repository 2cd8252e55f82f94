//! Experiment orchestration for the mask and physics co-optimization:
//! run directories, manifests, sweeps, ablations and figure panels.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;

pub use config::RunConfig;
pub use error::{exit_code, HarnessError};
