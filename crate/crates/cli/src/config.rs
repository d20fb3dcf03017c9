use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use motifdisco::downstream::anomaly::AnomalyConfig;
use motifdisco::downstream::cluster::ClusterConfig;
use motifdisco::downstream::forecast::ForecastConfig;
use motifdisco::entropy::EntropyConfig;
use motifdisco::motifs::ExtractionConfig;
use motifdisco::trace_data::SplitConfig;
use motifdisco::training::{BenchBase, BenchGrid, TrainConfig};
use motifdisco::{Error, Result};

/// Where traces come from: a CSV file, or the planted-structure generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub n: usize,
    pub trace_length: usize,
    pub templates: usize,
    pub successors: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            n: 100,
            trace_length: 480,
            templates: 10,
            successors: 2,
            noise_sigma: 0.02,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UsecaseConfig {
    pub split: SplitConfig,
    pub forecast: ForecastConfig,
    pub anomaly: AnomalyConfig,
    /// Windows of the test split replaced by injected anomalies.
    pub inject: usize,
    pub cluster: ClusterConfig,
}

impl Default for UsecaseConfig {
    fn default() -> Self {
        Self {
            split: SplitConfig::default(),
            forecast: ForecastConfig::default(),
            anomaly: AnomalyConfig::default(),
            inject: 20,
            cluster: ClusterConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// When set, replaces every per-section seed.
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub motifs: ExtractionConfig,
    pub entropy: EntropyConfig,
    pub train: TrainConfig,
    pub usecase: UsecaseConfig,
}

impl RunConfig {
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let loc = format!("{source}:{}:{}", e.line(), e.column());
            if e.is_data() {
                Error::InvalidConfig(format!("{loc}: {e}"))
            } else {
                Error::parse(loc, e)
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Apply the global seed to every section.
    pub fn resolved(mut self) -> Self {
        if let Some(s) = self.seed {
            self.data.seed = s;
            self.train.seed = s;
            self.usecase.split.seed = s;
            self.usecase.forecast.seed = s;
            self.usecase.anomaly.seed = s;
            self.usecase.cluster.seed = s;
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }
}

/// Input of the `bench` command.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub grid: BenchGrid,
    pub base: BenchBase,
    pub train: TrainConfig,
    pub entropy: EntropyConfig,
}

impl BenchConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            let loc = format!("{}:{}:{}", path.display(), e.line(), e.column());
            if e.is_data() {
                Error::InvalidConfig(format!("{loc}: {e}"))
            } else {
                Error::parse(loc, e)
            }
        })
    }
}
