//! Run manifests: content hashes of every produced artifact, the resolved
//! configuration hash, seed, and tool version. Timestamps live here and only
//! here so that the scientific outputs stay byte-reproducible.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub created_unix: u64,
    pub outputs: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_text: &str) -> Manifest {
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs: Vec::new(),
        }
    }

    /// Records `path` (hashing its current contents); the stored name is the
    /// path relative to `root`.
    pub fn record(&mut self, root: &Path, path: &Path) -> Result<()> {
        let rel: PathBuf = path.strip_prefix(root).unwrap_or(path).to_path_buf();
        self.outputs.push(ManifestEntry {
            path: rel.to_string_lossy().into_owned(),
            sha256: sha256_file(path)?,
            bytes: fs::metadata(path)?.len(),
        });
        Ok(())
    }

    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let path = root.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}
