//! Library side of the `cfhf` command: configuration, dataset files and the
//! commands themselves, kept out of `main` so tests can drive them.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod format;

use std::path::PathBuf;

pub use error::{CliError, Result};

pub const FIXTURES_ENV: &str = "CFHF_FIXTURES";

/// `$CFHF_FIXTURES`, or the fixture directory of the source tree.
pub fn fixtures_dir() -> PathBuf {
    std::env::var_os(FIXTURES_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures")))
}
