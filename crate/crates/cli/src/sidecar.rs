//! Metadata written next to every output file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
}

/// `dir/name.csv` → `dir/name.meta.json`.
pub fn path_for(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("output");
    output.with_file_name(format!("{stem}.meta.json"))
}

pub fn digest(path: &Path) -> CliResult<InputDigest> {
    let bytes =
        fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(InputDigest {
        file: path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: format!("{:x}", Sha256::digest(&bytes)),
    })
}

pub fn write(output: &Path, meta: &Metadata) -> CliResult<()> {
    let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    fs::write(path_for(output), json + "\n")?;
    Ok(())
}

/// Rejects an input produced under a different configuration. Inputs without
/// a sidecar are accepted.
pub fn check_input(input: &Path, config_hash: &str) -> CliResult<()> {
    let path = path_for(input);
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(());
    };
    let meta: Metadata = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if meta.config_hash != config_hash {
        return Err(CliError::Validation(format!(
            "config hash mismatch: {} was produced with config {}, current config is {}",
            input.display(),
            meta.config_hash,
            config_hash
        )));
    }
    Ok(())
}
