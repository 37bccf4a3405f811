//! Command-line companion to `flatvol-core`: TOML run configuration, CSV
//! panel loaders, report writers and run manifests.
//!
//! Every command writes into one output directory and finishes with
//! `manifest.json`, which records the resolved configuration and the SHA-256
//! of each input file. Passing that manifest back as `--config` reproduces
//! the run byte for byte.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod manifest;

pub use commands::{execute, Command};
pub use config::{LoadedConfig, Overrides, RunConfig};
pub use error::{AppError, Result};
