//! Run configuration: the simulator sections plus learner and training
//! settings, all in one TOML file.

use std::path::Path;

use anyhow::{Context, Result};
use hexcell_core::SimConfig;
use hexcell_learn::nn::NetworkConfig;
use hexcell_learn::ppo::PpoConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub seed: u64,
    pub episodes: usize,
    /// Write `checkpoints/episode_NNNNNN.hxck` every this many episodes; 0
    /// keeps only the final checkpoint.
    pub checkpoint_every: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            episodes: 300,
            checkpoint_every: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub sim: SimConfig,
    pub ppo: PpoConfig,
    pub network: NetworkConfig,
    pub train: TrainSettings,
}

/// The part of a configuration that determines trained weights. Episode
/// counts and checkpoint cadence are excluded so a resumed run keeps its
/// hash.
#[derive(Serialize)]
struct ModelKey<'a> {
    sim: &'a SimConfig,
    ppo: &'a PpoConfig,
    network: &'a NetworkConfig,
    seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.ppo.validate()?;
        hexcell_learn::nn::Arch::new(hexcell_learn::rollout::input_shape(&self.sim), &self.network)?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 over the canonical JSON of the weight-determining settings.
    pub fn hash(&self) -> [u8; 32] {
        let key = ModelKey {
            sim: &self.sim,
            ppo: &self.ppo,
            network: &self.network,
            seed: self.train.seed,
        };
        let bytes = serde_json::to_vec(&key).expect("configuration serializes to JSON");
        Sha256::digest(&bytes).into()
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash())
    }
}
