//! Run manifests and content fingerprints.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::recommend::Metrics;

/// FNV-1a 64-bit content fingerprint, hex-encoded.
pub fn fingerprint(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

pub fn fingerprint_file(path: &Path) -> Result<String> {
    Ok(fingerprint(&fs::read(path)?))
}

/// Everything needed to audit and reproduce a run with the same build.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub seed: u64,
    /// Raw text of the validated config file.
    pub config_echo: String,
    pub corpus_fingerprint: String,
    /// Checkpoint name -> content hash.
    pub checkpoints: BTreeMap<String, String>,
    /// Model/variant name -> mean metrics.
    pub metrics: BTreeMap<String, Metrics>,
    /// Stage name -> wall-clock seconds.
    pub timings: BTreeMap<String, f64>,
    /// Every emitted file (relative path) -> content hash.
    pub files: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(seed: u64, config_echo: String) -> Self {
        RunManifest {
            version: 1,
            seed,
            config_echo,
            ..Default::default()
        }
    }

    /// Register an emitted file by hashing its current content.
    pub fn record_file(&mut self, root: &Path, path: &Path) -> Result<()> {
        let rel = path
            .strip_prefix(root)
            .unwrap_or(path)
            .to_string_lossy()
            .to_string();
        self.files.insert(rel, fingerprint_file(path)?);
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
