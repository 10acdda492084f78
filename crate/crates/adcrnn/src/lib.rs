//! File formats, checkpoints, synthetic data, the cross-validation runner
//! and the command-line front end around `adcrnn-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod format;
pub mod manifest;
pub mod pipeline;
pub mod predict;
pub mod report;
pub mod runner;
pub mod synth;

pub use error::{AppError, AppResult};
