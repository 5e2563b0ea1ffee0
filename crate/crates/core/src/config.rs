//! Aggregate simulator configuration, loadable from TOML.

use serde::{Deserialize, Serialize};

use crate::consensus::ConsensusConfig;
use crate::env::{EnvConfig, ObservationConfig};
use crate::error::{Error, Result};
use crate::handover::HandoverConfig;
use crate::metrics::MetricsConfig;
use crate::radio::RadioConfig;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub scenario: ScenarioConfig,
    pub radio: RadioConfig,
    pub handover: HandoverConfig,
    pub observation: ObservationConfig,
    pub consensus: ConsensusConfig,
    pub env: EnvConfig,
    pub metrics: MetricsConfig,
}

impl SimConfig {
    pub fn full_scale() -> Self {
        Self {
            scenario: ScenarioConfig::full_scale(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.radio.validate()?;
        self.handover.validate()?;
        self.observation.validate()?;
        self.env.validate()?;
        self.metrics.validate()?;
        let min_slots = self.handover.h1 + self.handover.h2 + 1;
        if self.scenario.num_slots < min_slots {
            return Err(Error::config(format!(
                "num_slots = {} must be at least h1 + h2 + 1 = {min_slots}",
                self.scenario.num_slots
            )));
        }
        if !(self.consensus.neighbor_distance_m > 0.0) {
            return Err(Error::config("neighbor_distance_m must be positive"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }
}
