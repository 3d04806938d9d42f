//! Run manifest: what produced the current outputs.

use std::collections::BTreeMap;
use std::path::Path;

use groupscope_core::digest::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::fsio::{self, IoError};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Timestamps live here so that the manifest itself stays reproducible.
pub const RUN_LOG_FILE: &str = "run_log.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    /// Output file name → SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_digest: String,
    pub lexicon_version: Option<u64>,
    pub input_digests: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(config_digest: String, input_digests: BTreeMap<String, String>) -> Self {
        let mut m = RunManifest {
            run_id: String::new(),
            config_digest,
            lexicon_version: None,
            input_digests,
            stages: BTreeMap::new(),
        };
        m.refresh_run_id();
        m
    }

    /// The run id is derived from the config and input digests, so identical
    /// inputs give identical manifests.
    pub fn refresh_run_id(&mut self) {
        let mut key = self.config_digest.clone();
        for (k, v) in &self.input_digests {
            key.push('\n');
            key.push_str(k);
            key.push('=');
            key.push_str(v);
        }
        self.run_id = sha256_hex(key.as_bytes())[..16].to_string();
    }

    pub fn load(dir: &Path) -> Result<Option<RunManifest>, IoError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        fsio::read_json(&path).map(Some)
    }

    pub fn save(&self, dir: &Path) -> Result<(), IoError> {
        fsio::write_json(&dir.join(MANIFEST_FILE), self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub run_id: String,
    pub stage: String,
    pub started: String,
    pub finished: String,
}
