//! Experiment configuration: a single TOML document with nested sections.
//!
//! Unknown keys are rejected. After parsing, every default is materialized
//! and the resolved document is persisted next to the run so it can be
//! re-executed verbatim.

use aggss_core::data::{DatasetSpec, ImageDataset};
use aggss_core::scenario::{
    build_longtail, build_semisupervised, build_traditional, MixingWeights, TaskStream,
    DEFAULT_MIN_PER_CLASS,
};
use aggss_core::trainer::{PluginSpec, TrainConfig};
use aggss_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    /// Label used in reports and tables.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub dataset: DatasetSpec,
    pub scenario: ScenarioSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, rename = "plugin")]
    pub plugins: Vec<PluginSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: String,
    /// Grad-CAM tap layer; backbone default when unset.
    #[serde(default)]
    pub gradcam_layer: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// traditional | longtail | semi-supervised | single-task
    pub kind: String,
    #[serde(default)]
    pub base: Option<usize>,
    #[serde(default)]
    pub increment: Option<usize>,
    #[serde(default)]
    pub imbalance_ratio: Option<f64>,
    #[serde(default)]
    pub ordered: Option<bool>,
    #[serde(default)]
    pub min_per_class: Option<usize>,
    #[serde(default)]
    pub splits: Option<Vec<usize>>,
    #[serde(default)]
    pub label_fraction: Option<f64>,
    #[serde(default)]
    pub outlier_task: Option<bool>,
    #[serde(default)]
    pub mixing: Option<MixingWeights>,
}

impl ExperimentConfig {
    /// Parses, applies environment overrides (`AGGSS_DATA_ROOT`,
    /// `AGGSS_OUT_DIR`), and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|_| Error::MissingPath(path.as_ref().display().to_string()))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("config schema: {e}")))?;
        if config.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {}",
                config.version
            )));
        }
        if let Ok(root) = std::env::var("AGGSS_DATA_ROOT") {
            if !root.is_empty() {
                config.dataset.root = Some(root);
            }
        }
        if let Ok(dir) = std::env::var("AGGSS_OUT_DIR") {
            if !dir.is_empty() {
                config.output.dir = Some(dir);
            }
        }
        config.resolve();
        config.validate()?;
        Ok(config)
    }

    /// Copies the top-level seed into the training config and fills the
    /// display name.
    fn resolve(&mut self) {
        if let Some(seed) = self.seed {
            self.train.seed = seed;
        } else {
            self.seed = Some(self.train.seed);
        }
        if self.name.is_none() {
            let m = self.train.m;
            self.name = Some(format!(
                "{}-{}-m{}",
                self.dataset.kind, self.scenario.kind, m
            ));
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        match self.scenario.kind.as_str() {
            "traditional" | "longtail" | "semi-supervised" | "single-task" => Ok(()),
            other => Err(Error::Config(format!(
                "unknown scenario kind `{other}` (known: traditional, longtail, semi-supervised, single-task)"
            ))),
        }
    }

    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or("run")
    }

    pub fn build_stream(&self, ds: &ImageDataset) -> Result<TaskStream> {
        let seed = self.train.seed;
        let s = &self.scenario;
        match s.kind.as_str() {
            "traditional" => build_traditional(
                ds,
                s.base
                    .ok_or_else(|| Error::Config("traditional scenario needs `base`".into()))?,
                s.increment
                    .ok_or_else(|| Error::Config("traditional scenario needs `increment`".into()))?,
                seed,
            ),
            "single-task" => build_traditional(ds, ds.num_classes(), 0, seed),
            "longtail" => build_longtail(
                ds,
                s.base
                    .ok_or_else(|| Error::Config("longtail scenario needs `base`".into()))?,
                s.increment
                    .ok_or_else(|| Error::Config("longtail scenario needs `increment`".into()))?,
                s.imbalance_ratio.unwrap_or(0.01),
                s.ordered.unwrap_or(true),
                seed,
                s.min_per_class.unwrap_or(DEFAULT_MIN_PER_CLASS),
            ),
            "semi-supervised" => build_semisupervised(
                ds,
                s.splits
                    .as_deref()
                    .ok_or_else(|| Error::Config("semi-supervised scenario needs `splits`".into()))?,
                s.label_fraction.unwrap_or(0.5),
                s.outlier_task.unwrap_or(true),
                seed,
                s.mixing.unwrap_or_default(),
            ),
            other => Err(Error::Config(format!("unknown scenario kind `{other}`"))),
        }
    }

    /// Serializes the fully resolved document.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }
}
