//! Run manifests: the command, the full resolved configuration and a SHA-256
//! digest of every input file, written after all other outputs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{AppError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub config: RunConfig,
    /// Input path to hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Files written by the run, relative to the output directory.
    pub outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digests of the input files named in `config`.
pub fn input_digests(config: &RunConfig) -> Result<BTreeMap<String, String>> {
    let u = &config.universe;
    let mut out = BTreeMap::new();
    for path in [&u.prices, &u.universe, &u.benchmark, &u.factors].into_iter().flatten() {
        out.insert(path.display().to_string(), sha256_file(path)?);
    }
    Ok(out)
}

/// Fails if any input differs from what a manifest recorded.
pub fn verify_inputs(expected: &BTreeMap<String, String>, actual: &BTreeMap<String, String>) -> Result<()> {
    for (path, digest) in expected {
        let found = actual.get(path).cloned().unwrap_or_else(|| "nothing".into());
        if &found != digest {
            return Err(AppError::DigestMismatch {
                path: path.into(),
                expected: digest.clone(),
                actual: found,
            });
        }
    }
    Ok(())
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| AppError::io(path, e))
    }
}
