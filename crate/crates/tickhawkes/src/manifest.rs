//! Run manifests: one JSON file next to each command's primary output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use tickhawkes_core::simulate::LabeledDataset;

use crate::error::{Error, Result};

pub const VERSION: &str = env!("TICKHAWKES_VERSION");

/// Key in [`RunManifest::extra`] holding the fingerprints of training paths.
pub const TRAINING_FINGERPRINTS: &str = "training_fingerprints";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    /// Every setting the command ran with, after config-file merging.
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Named wall-clock durations in seconds.
    pub timings: BTreeMap<String, f64>,
    #[serde(default)]
    pub extra: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: usize, config: Value) -> Self {
        RunManifest {
            command: command.to_owned(),
            version: VERSION.to_owned(),
            seed,
            threads,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    /// Manifest location for an output file: `<output>.manifest.json`.
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn write_beside(&self, output: &Path) -> Result<PathBuf> {
        let path = Self::path_for(output);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn training_fingerprints(&self) -> Option<Vec<String>> {
        serde_json::from_value(self.extra.get(TRAINING_FINGERPRINTS)?.clone()).ok()
    }
}

/// First 16 hex digits of the SHA-256 of a path's inter-arrivals and directions.
pub fn path_fingerprint(gaps: &[f64], directions: &[u8]) -> String {
    let mut h = Sha256::new();
    for g in gaps {
        h.update(g.to_le_bytes());
    }
    h.update(directions);
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn dataset_fingerprints(ds: &LabeledDataset, indices: impl IntoIterator<Item = usize>) -> Vec<String> {
    indices
        .into_iter()
        .map(|i| {
            let (g, d) = ds.path(i);
            path_fingerprint(g, d)
        })
        .collect()
}
