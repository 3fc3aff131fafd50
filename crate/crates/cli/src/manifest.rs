//! Reproducibility record written next to every run.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.cfg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// `dam run` or `nls run`
    pub command: String,
    /// sha256 of `config.cfg`, hex
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    /// Unix time in seconds.
    pub started: f64,
    pub finished: f64,
    /// `completed`, `boundary_reached` or `failed: <reason>`
    pub status: String,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(command: &str, config: &[u8], seeds: Vec<u64>) -> Self {
        Self {
            tool: "wavecool".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: sha256_hex(config),
            seeds,
            started: unix_now(),
            finished: 0.0,
            status: "running".into(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self)?;
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Checks that the stored config still hashes to the recorded value.
    pub fn verify(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(CONFIG_FILE);
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let h = sha256_hex(&bytes);
        if h != self.config_sha256 {
            bail!("{} hashes to {h}, manifest records {}", path.display(), self.config_sha256);
        }
        Ok(())
    }
}
