//! Run manifests: every artifact-producing command records its resolved
//! configuration, input fingerprints, and outputs next to the artifacts.

use std::path::{Path, PathBuf};

use popseq::{Error, Result};
use sha2::{Digest, Sha256};

#[derive(Debug, serde::Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, serde::Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub resolved_config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub wall_seconds: f64,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

impl RunManifest {
    pub fn new(command: &str, resolved_config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            resolved_config,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_seconds: 0.0,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: file_sha256(path)?,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Write to `<dir>/manifest.json` or `<file>.manifest.json`.
    pub fn save(&self, anchor: &Path) -> Result<PathBuf> {
        let path = if anchor.is_dir() {
            anchor.join("manifest.json")
        } else {
            anchor.with_extension(format!(
                "{}manifest.json",
                anchor
                    .extension()
                    .map(|e| format!("{}.", e.to_string_lossy()))
                    .unwrap_or_default()
            ))
        };
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
