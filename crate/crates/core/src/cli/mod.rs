//! Command-line front end: configuration, batch orchestration and artifacts.

pub mod commands;
pub mod config;
pub mod svg;

pub use commands::{cmd_analyze, cmd_bench, cmd_fit, cmd_purify, run, Command, FileRecord, Outcome, RunManifest};
pub use config::{AnalyzeConfig, BenchConfig, Method, RunConfig};
