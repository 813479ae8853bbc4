//! Structured run configuration: one TOML document drives every subcommand.
//! Unknown keys are rejected, and referenced data paths are checked at load.

use crate::dataio::{align, load_embeddings, load_stats_csv, load_stringency_csv, RegionDataset};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::optim::TrainConfig;
use crate::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn default_roc_period() -> usize {
    7
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub stats: PathBuf,
    pub stringency: PathBuf,
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    /// Differencing period for the stringency rate-of-change features.
    #[serde(default = "default_roc_period")]
    pub roc_period: usize,
    #[serde(default)]
    pub region: Option<String>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_horizons() -> Vec<usize> {
    vec![7]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Training seeds; each (seed, horizon) pair yields one checkpoint.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds list is empty".into()));
        }
        if self.horizons.is_empty() {
            return Err(Error::Config("horizons list is empty".into()));
        }
        if self.horizons.contains(&0) {
            return Err(Error::Config("horizons must be >= 1".into()));
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.clone().unwrap_or_default()
    }

    pub fn data_config(&self) -> Result<&DataConfig> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a [data] section".into()))
    }

    pub fn model_config(&self) -> Result<&ModelConfig> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a [model] section".into()))
    }

    /// Loads, validates and date-aligns the modalities named in [data].
    /// The embedding file is required only when the model variant uses it.
    pub fn load_dataset(&self, need_embeddings: bool) -> Result<RegionDataset> {
        let data = self.data_config()?;
        for (name, path, required) in [
            ("stats", Some(&data.stats), true),
            ("stringency", Some(&data.stringency), true),
            ("embeddings", data.embeddings.as_ref(), need_embeddings),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{name} path {} does not exist",
                        p.display()
                    )));
                }
            } else if required {
                return Err(Error::Config(format!("[data] lacks the required {name} path")));
            }
        }
        let stats = load_stats_csv(&data.stats)?;
        let stringency = load_stringency_csv(&data.stringency)?;
        let embeddings = match &data.embeddings {
            Some(p) if p.exists() => Some(load_embeddings(p)?),
            _ => None,
        };
        let region = data
            .region
            .clone()
            .or_else(|| embeddings.as_ref().map(|e| e.region.clone()))
            .unwrap_or_else(|| "unknown".into());
        align(&stats, &stringency, embeddings.as_ref(), data.roc_period, &region)
    }
}
