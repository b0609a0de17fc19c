//! Run manifest: what was produced, when, and with which content hash.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifacts::{read_json, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Unix seconds.
    pub started: u64,
    pub finished: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub tool: String,
    pub config_hash: String,
    /// Keyed by work unit, e.g. `train D_AOS-N7 seed 0`.
    pub stages: BTreeMap<String, StageRecord>,
    /// Keyed by path relative to the run directory, `/`-separated.
    pub files: BTreeMap<String, FileEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{0}: listed in the manifest but missing")]
    Missing(String),
    #[error("{path}: hash mismatch (manifest {expected}, file {actual})")]
    HashMismatch { path: String, expected: String, actual: String },
    #[error("manifest version {0} (expected {MANIFEST_VERSION})")]
    Version(u32),
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        Self {
            version: MANIFEST_VERSION,
            tool: TOOL_VERSION.to_string(),
            config_hash,
            stages: BTreeMap::new(),
            files: BTreeMap::new(),
        }
    }

    /// Reads `root/manifest.json`, or starts a fresh one.
    pub fn open(root: &Path, config_hash: &str) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::new(config_hash.to_string()));
        }
        let m: Self = read_json(&path)?;
        if m.version != MANIFEST_VERSION {
            return Err(ManifestError::Version(m.version).into());
        }
        if m.config_hash != config_hash {
            bail!(
                "{} belongs to a different experiment (config hash {}, current {})",
                root.display(),
                m.config_hash,
                config_hash
            );
        }
        Ok(m)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        write_json(&root.join(MANIFEST_FILE), self)
    }

    pub fn record_stage(&mut self, unit: &str, started: u64, seconds: f64) {
        self.stages.insert(
            unit.to_string(),
            StageRecord {
                started,
                finished: unix_now(),
                seconds,
            },
        );
    }

    pub fn record_file(&mut self, root: &Path, rel: &str) -> Result<()> {
        let bytes = std::fs::read(root.join(rel)).with_context(|| format!("hashing {}", rel))?;
        self.files.insert(
            rel.to_string(),
            FileEntry {
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            },
        );
        Ok(())
    }

    /// Total recorded stage time, in seconds.
    pub fn total_seconds(&self) -> f64 {
        self.stages.values().map(|s| s.seconds).sum()
    }

    /// Checks every listed file; returns all failures.
    pub fn verify(&self, root: &Path) -> Vec<ManifestError> {
        let mut errs = Vec::new();
        for (rel, entry) in &self.files {
            match std::fs::read(root.join(rel)) {
                Err(_) => errs.push(ManifestError::Missing(rel.clone())),
                Ok(bytes) => {
                    let actual = sha256_hex(&bytes);
                    if actual != entry.sha256 {
                        errs.push(ManifestError::HashMismatch {
                            path: rel.clone(),
                            expected: entry.sha256.clone(),
                            actual,
                        });
                    }
                }
            }
        }
        errs
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
    fn verify_detects_truncation_and_loss() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::write(root.join("a.bin"), [1u8, 2, 3, 4]).unwrap();
        std::fs::write(root.join("b.bin"), [9u8]).unwrap();
        let mut m = RunManifest::new("h".into());
        m.record_file(root, "a.bin").unwrap();
        m.record_file(root, "b.bin").unwrap();
        m.record_stage("train", 0, 1.5);
        m.save(root).unwrap();
        let back = RunManifest::open(root, "h").unwrap();
        assert_eq!(back, m);
        assert!(back.verify(root).is_empty());

        std::fs::write(root.join("a.bin"), [1u8, 2]).unwrap();
        std::fs::remove_file(root.join("b.bin")).unwrap();
        let errs = back.verify(root);
        assert_eq!(errs.len(), 2);
        assert!(matches!(errs[0], ManifestError::HashMismatch { .. }));
        assert!(errs[0].to_string().contains("hash mismatch"));
        assert!(matches!(errs[1], ManifestError::Missing(_)));
    }

    #[test]
    fn foreign_manifests_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        RunManifest::new("one".into()).save(dir.path()).unwrap();
        assert!(RunManifest::open(dir.path(), "two").is_err());
        let mut m = RunManifest::new("one".into());
        m.version = 7;
        m.save(dir.path()).unwrap();
        assert!(RunManifest::open(dir.path(), "one").unwrap_err().to_string().contains("version 7"));
    }
}
