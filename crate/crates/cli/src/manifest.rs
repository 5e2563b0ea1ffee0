//! `manifest.json`, written into every output directory.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: RunConfig,
    /// Hex SHA-256 of the weight-determining configuration.
    pub config_hash: String,
    pub seed: u64,
    /// First episode index covered by this run's outputs.
    pub first_episode: usize,
    pub episodes: usize,
    /// Not part of any reproducibility guarantee.
    pub wall_clock_seconds: f64,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, seed: u64, first_episode: usize, episodes: usize) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            config_hash: config.hash_hex(),
            seed,
            first_episode,
            episodes,
            wall_clock_seconds: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join(FILE), text + "\n").with_context(|| format!("writing manifest in {}", dir.display()))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(FILE);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// True when the recorded hash still matches the recorded configuration.
    pub fn hash_is_consistent(&self) -> bool {
        self.config.hash_hex() == self.config_hash
    }
}
