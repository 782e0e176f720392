//! Pipeline configuration file (TOML) with desk and full-size presets.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::{DetectorConfig, SigmaEstimator};
use crate::error::{NilmError, Result};
use crate::pipeline::{overlap_group, Phase1Config, Phase2Config, PipelineKind};
use crate::types::{Registry, SampledSeries};

pub const CONFIG_VERSION: &str = "nilm-config/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Full,
}

impl std::str::FromStr for Preset {
    type Err = NilmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            _ => Err(NilmError::InvalidConfig(format!("unknown preset {s:?} (expected desk or full)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSettings {
    /// Fixed grid-noise threshold in watts; estimated from the training aggregate when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_g: Option<f64>,
    pub estimator: SigmaEstimator,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self { sigma_g: None, estimator: SigmaEstimator::default() }
    }
}

impl DetectorSettings {
    pub fn resolve(&self, s: &SampledSeries) -> Result<DetectorConfig> {
        match self.sigma_g {
            Some(g) => DetectorConfig::new(g),
            None => DetectorConfig::new(self.estimator.sigma_g(s)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_days: usize,
    pub test_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub version: String,
    pub preset: Preset,
    pub pipeline: PipelineKind,
    /// Overlap group override; derived from the registry bands when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<Vec<String>>,
    pub split: SplitConfig,
    pub detector: DetectorSettings,
    pub phase1: Phase1Config,
    pub phase2: Phase2Config,
}

impl PipelineConfig {
    pub fn desk(pipeline: PipelineKind) -> Self {
        Self {
            version: CONFIG_VERSION.into(),
            preset: Preset::Desk,
            pipeline,
            overlap: None,
            split: SplitConfig { train_days: 20, test_days: 10 },
            detector: DetectorSettings::default(),
            phase1: Phase1Config::default(),
            phase2: Phase2Config::desk(),
        }
    }

    /// Published network sizes and the 550/180-day split.
    pub fn full(pipeline: PipelineKind) -> Self {
        Self { preset: Preset::Full, split: SplitConfig { train_days: 550, test_days: 180 }, phase2: Phase2Config::full(), ..Self::desk(pipeline) }
    }

    pub fn preset(preset: Preset, pipeline: PipelineKind) -> Self {
        match preset {
            Preset::Desk => Self::desk(pipeline),
            Preset::Full => Self::full(pipeline),
        }
    }

    /// Sets every seed in the configuration.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.phase2.train.seed = seed;
        if let Some(b) = self.phase1.balance.as_mut() {
            b.seed = seed;
        }
        self
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s = vec![self.phase2.train.seed];
        if let Some(b) = &self.phase1.balance {
            s.push(b.seed);
        }
        s.dedup();
        s
    }

    pub fn overlap_group(&self, registry: &Registry) -> BTreeSet<String> {
        match &self.overlap {
            Some(v) => v.iter().cloned().collect(),
            None => overlap_group(registry),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(NilmError::InvalidConfig(format!("config version {:?}, expected {CONFIG_VERSION:?}", self.version)));
        }
        if let Some(g) = self.detector.sigma_g {
            DetectorConfig::new(g)?;
        }
        if self.phase1.k < 2 {
            return Err(NilmError::KTooSmall(self.phase1.k));
        }
        self.phase2.lstm.validate()?;
        self.phase2.window.validate()?;
        let t = &self.phase2.train;
        if t.batch_size == 0 || !(t.lr > 0.0) {
            return Err(NilmError::InvalidConfig("training needs batch_size >= 1 and lr > 0".into()));
        }
        if !(0.0..1.0).contains(&self.phase2.val_fraction) {
            return Err(NilmError::InvalidConfig("val_fraction must be in [0, 1)".into()));
        }
        if self.split.train_days == 0 || self.split.test_days == 0 {
            return Err(NilmError::InvalidConfig("split needs at least one train and one test day".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| NilmError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| NilmError::io(path, e))?;
        Self::from_toml(&text)
    }
}
