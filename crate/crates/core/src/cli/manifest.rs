use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FORMAT: &str = "predictalang.manifest.v1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl InputRecord {
    pub fn new(path: &Path, contents: &[u8]) -> Self {
        Self {
            path: path.display().to_string(),
            sha256: sha256_hex(contents),
            bytes: contents.len() as u64,
        }
    }
}

/// Record of one run: every effective parameter, input checksums, outputs.
/// Contains no timestamps, so identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    #[serde(default)]
    pub diagnostics: serde_json::Map<String, serde_json::Value>,
}

impl Manifest {
    pub fn new<P: Serialize>(subcommand: &str, parameters: &P) -> Self {
        Self {
            format: MANIFEST_FORMAT.to_string(),
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            parameters: serde_json::to_value(parameters).expect("parameters serialize"),
            inputs: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            diagnostics: serde_json::Map::new(),
        }
    }

    pub fn diagnostic(&mut self, key: &str, value: impl Serialize) {
        self.diagnostics.insert(
            key.to_string(),
            serde_json::to_value(value).expect("diagnostics serialize"),
        );
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
