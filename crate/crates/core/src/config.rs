//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "model": { "variant": "qasa", "seq_len": 32, "d_model": 64, ... },
//!   "train": { "lr": 1e-4, "epochs": 45, ... },
//!   "data":  { "task": "damped_oscillator", "length": 832, "window": 32, ... },
//!   "output_dir": "runs/default"
//! }
//! ```
//!
//! Every field is optional; `{}` is the desk-scale QASA run on the damped
//! oscillator.

use crate::data::{SeriesSpec, Task};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Variant};
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub task: Task,
    pub length: usize,
    pub dt: Option<f64>,
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
    /// Window length; must equal `model.seq_len`.
    pub window: usize,
    pub split_ratio: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self::desk(Task::DampedOscillator)
    }
}

impl DataConfig {
    /// 832 points at L=32 (800 windows).
    pub fn desk(task: Task) -> Self {
        Self {
            task,
            length: 832,
            dt: None,
            seed: 42,
            params: BTreeMap::new(),
            window: 32,
            split_ratio: 0.8,
        }
    }

    /// 2050 points at L=50 (2000 windows).
    pub fn full(task: Task) -> Self {
        Self {
            length: 2050,
            window: 50,
            ..Self::desk(task)
        }
    }

    pub fn series_spec(&self) -> SeriesSpec {
        SeriesSpec {
            task: self.task,
            length: self.length,
            dt: self.dt,
            seed: self.seed,
            params: self.params.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn desk(variant: Variant, task: Task) -> Self {
        Self {
            model: ModelConfig::desk(variant),
            data: DataConfig::desk(task),
            ..Self::default()
        }
    }

    pub fn full(variant: Variant, task: Task) -> Self {
        Self {
            model: ModelConfig::full(variant),
            data: DataConfig::full(task),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.data.window != self.model.seq_len {
            return Err(Error::config(
                "data.window",
                format!("{} differs from model.seq_len {}", self.data.window, self.model.seq_len),
            ));
        }
        if self.data.length < self.data.window + 2 {
            return Err(Error::config(
                "data.length",
                format!("need at least window + 2 = {} points", self.data.window + 2),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
