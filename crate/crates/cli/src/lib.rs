//! Command-line pipeline around the `phasecp` library.

pub mod commands;
pub mod config;

pub use commands::Provenance;
pub use config::{parse_ranks, PipelineConfig};
