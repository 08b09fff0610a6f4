//! Library backing the `grader` command-line pipeline: dataset synthesis,
//! feature extraction over manifests, correspondence analysis and
//! k-nearest-neighbor grading reports.

pub mod config;
pub mod dataset;
mod error;
pub mod manifest;
pub mod pipeline;

pub use error::{CliError, Result};
