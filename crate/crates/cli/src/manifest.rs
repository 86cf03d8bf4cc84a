use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "gridimage";

/// Provenance attached to every JSON result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub timestamp: String,
    /// sha256 of each textual input, keyed by the flag it came from.
    pub input_hashes: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seed: Option<u64>, inputs: &Inputs) -> Self {
        RunManifest {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            seed,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            input_hashes: inputs.hashes.clone(),
        }
    }

    /// Hash of everything except the timestamp; keys the result cache.
    pub fn key(&self) -> String {
        let keyed = RunManifest {
            timestamp: String::new(),
            ..self.clone()
        };
        sha256_hex(
            serde_json::to_string(&keyed)
                .expect("serializable")
                .as_bytes(),
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct Inputs {
    hashes: BTreeMap<String, String>,
}

impl Inputs {
    pub fn record(&mut self, name: &str, content: &str) {
        self.hashes
            .insert(name.to_string(), sha256_hex(content.as_bytes()));
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope {
    pub manifest: RunManifest,
    pub result: Value,
}

/// Results stored by manifest key.
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Cache {
            dir: dir.to_path_buf(),
        })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        let bytes = fs::read(self.path(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn put(&self, key: &str, result: &Value) -> std::io::Result<()> {
        let tmp = self.dir.join(format!("{key}.json.tmp"));
        fs::write(&tmp, serde_json::to_vec(result).expect("serializable"))?;
        fs::rename(tmp, self.path(key))
    }
}
