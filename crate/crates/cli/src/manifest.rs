//! `manifest.json`: what produced a run directory and a digest of every file
//! in it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    /// Accuracy on the validation subsample; the denominator of relative accuracy.
    pub full_precision_accuracy: f64,
    pub test_accuracy: f64,
    pub validation_items: usize,
    pub test_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub baseline: Option<BaselineRecord>,
    pub commands: Vec<CommandRecord>,
    /// Relative path to digest.
    pub files: BTreeMap<String, FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(cfg.to_toml().as_bytes())
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn load_or_new(dir: &Path, cfg: Option<&RunConfig>) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let mut m = if path.is_file() {
            serde_json::from_slice(&fs::read(&path)?)?
        } else {
            RunManifest {
                tool_version: env!("CARGO_PKG_VERSION").into(),
                config_hash: String::new(),
                seed: 0,
                baseline: None,
                commands: Vec::new(),
                files: BTreeMap::new(),
            }
        };
        if let Some(cfg) = cfg {
            m.config_hash = config_hash(cfg);
            m.seed = cfg.seed;
        }
        m.tool_version = env!("CARGO_PKG_VERSION").into();
        Ok(m)
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path)
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Digests `names` (relative to `dir`) into the inventory.
    pub fn record_files(&mut self, dir: &Path, names: &[&str]) -> Result<(), CliError> {
        for name in names {
            let bytes = fs::read(dir.join(name))?;
            self.files.insert((*name).to_string(), FileEntry { sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        }
        Ok(())
    }

    pub fn record_command(&mut self, command: &str, cfg: Option<&RunConfig>, started_unix: u64) {
        self.commands.push(CommandRecord {
            command: command.into(),
            config_hash: cfg.map(config_hash).unwrap_or_default(),
            seed: cfg.map_or(self.seed, |c| c.seed),
            started_unix,
            finished_unix: unix_now(),
        });
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "x\n1\n").unwrap();
        let mut m = RunManifest::load_or_new(dir.path(), None).unwrap();
        m.record_files(dir.path(), &["a.csv"]).unwrap();
        m.record_command("report", None, 5);
        m.save(dir.path()).unwrap();
        let back = RunManifest::load(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.files["a.csv"].bytes, 4);
    }
}
