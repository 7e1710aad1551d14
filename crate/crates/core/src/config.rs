//! Run configuration loaded from TOML. Every key is optional; missing keys
//! take the defaults below and unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dhdp::{BlockConfig, MonitorParams};
use crate::error::{Error, Result};
use crate::harness::{BatchSpec, HarnessParams, Stage};
use crate::plant::{PlantConfig, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// 1 = level ground, 2 = terrain, 3 = pace.
    pub scenario: u8,
    pub stage: Stage,
    pub seed: u64,
    /// Worker threads; zero uses all cores.
    pub jobs: usize,
    pub out: PathBuf,
    /// Directory of saved policies for a testing run. When unset, a
    /// training batch with the same seed is run first to produce them.
    pub policy_dir: Option<PathBuf>,
    pub plant: PlantConfig,
    pub dhdp: BlockConfig,
    pub harness: HarnessParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: 1,
            stage: Stage::Training,
            seed: 0,
            jobs: 0,
            out: PathBuf::from("runs"),
            policy_dir: None,
            plant: PlantConfig::default(),
            dhdp: BlockConfig::default(),
            harness: HarnessParams::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::ConfigNotFound(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = cfg;
        // the monitor weights follow the discount unless given explicitly
        let raw: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let has_monitor = raw.get("dhdp").and_then(|d| d.get("monitor")).is_some();
        if !has_monitor {
            cfg.dhdp.monitor = MonitorParams::for_discount(cfg.dhdp.cost.gamma);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::from_number(self.scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario()?;
        self.plant.validate()?;
        self.dhdp.validate()?;
        self.harness.validate()
    }

    pub fn batch_spec(&self, stage: Stage) -> Result<BatchSpec> {
        Ok(BatchSpec {
            scenario: self.scenario()?,
            stage,
            seed: self.seed,
            plant: self.plant,
            dhdp: self.dhdp,
            harness: self.harness.clone(),
            jobs: self.jobs,
            policies: vec![],
        })
    }
}
