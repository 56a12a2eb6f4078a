//! Run metadata written next to every artifact as `<file>.meta.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIDECAR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the effective configuration as compact JSON.
    pub config_hash: String,
    pub config: serde_json::Value,
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl Sidecar {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Self {
        let config = serde_json::to_value(config).expect("config serializes");
        Self {
            format_version: SIDECAR_FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_hash: config_hash(&config),
            config,
            extra: serde_json::Value::Null,
        }
    }

    pub fn with_extra(mut self, extra: serde_json::Value) -> Self {
        self.extra = extra;
        self
    }
}

pub fn config_hash<C: Serialize>(config: &C) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    super::sha256_hex(&json)
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    artifact.with_file_name(name)
}

/// Write the sidecar of `artifact`; returns its path.
pub fn write_sidecar(artifact: &Path, sidecar: &Sidecar) -> Result<PathBuf> {
    let path = sidecar_path(artifact);
    let json = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_sidecar(artifact: &Path) -> Result<Sidecar> {
    let path = sidecar_path(artifact);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Load {
        path,
        field: "sidecar".into(),
        detail: e.to_string(),
    })
}
