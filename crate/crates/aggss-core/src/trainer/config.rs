//! Training configuration.

use crate::error::{Error, Result};
use crate::transform::SUPPORTED_M;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPolicy {
    Herding,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Epochs per task.
    pub epochs: usize,
    /// Source batch size before rotation expansion.
    pub batch_size: usize,
    pub learning_rate: f32,
    /// Epochs at which the learning rate is multiplied by `lr_decay`.
    pub lr_milestones: Vec<usize>,
    pub lr_decay: f32,
    pub optimizer: String,
    pub momentum: f32,
    pub weight_decay: f32,
    /// Transform count M.
    pub m: usize,
    /// Total exemplar capacity; 0 disables replay.
    pub exemplar_budget: usize,
    pub selection: SelectionPolicy,
    /// Pad-crop-flip augmentation on training batches.
    pub augment: bool,
    pub grad_clip: Option<f32>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            learning_rate: 0.1,
            lr_milestones: vec![12, 17],
            lr_decay: 0.1,
            optimizer: "sgd".into(),
            momentum: 0.9,
            weight_decay: 5e-4,
            m: 4,
            exemplar_budget: 2000,
            selection: SelectionPolicy::Herding,
            augment: true,
            grad_clip: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.learning_rate <= 0.0 || self.lr_decay <= 0.0 {
            return Err(Error::Config("learning rate and decay must be positive".into()));
        }
        if self.optimizer != "sgd" {
            return Err(Error::Config(format!(
                "unknown optimizer `{}` (supported: sgd)",
                self.optimizer
            )));
        }
        if !SUPPORTED_M.contains(&self.m) {
            return Err(Error::Config(format!(
                "m must be one of {SUPPORTED_M:?}, got {}",
                self.m
            )));
        }
        let mut prev = None;
        for &ms in &self.lr_milestones {
            if ms >= self.epochs {
                return Err(Error::Config(format!(
                    "milestone {ms} is not below epochs {}",
                    self.epochs
                )));
            }
            if let Some(p) = prev {
                if ms <= p {
                    return Err(Error::Config("milestones must be strictly increasing".into()));
                }
            }
            prev = Some(ms);
        }
        Ok(())
    }

    /// Learning rate in force during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f32 {
        let drops = self.lr_milestones.iter().filter(|&&ms| epoch >= ms).count();
        self.learning_rate * self.lr_decay.powi(drops as i32)
    }
}

/// Declarative plugin selection for configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluginSpec {
    pub name: String,
    #[serde(default = "default_weight")]
    pub weight: f32,
    #[serde(default)]
    pub temperature: Option<f32>,
}

fn default_weight() -> f32 {
    1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn milestones_drive_the_schedule() {
        let config = TrainConfig {
            epochs: 10,
            learning_rate: 0.1,
            lr_milestones: vec![4, 8],
            lr_decay: 0.1,
            ..Default::default()
        };
        config.validate().unwrap();
        assert!((config.lr_at(0) - 0.1).abs() < 1e-9);
        assert!((config.lr_at(3) - 0.1).abs() < 1e-9);
        assert!((config.lr_at(4) - 0.01).abs() < 1e-9);
        assert!((config.lr_at(9) - 0.001).abs() < 1e-9);
    }

    #[test]
    fn validation_rejects_bad_milestones() {
        let mut config = TrainConfig::default();
        config.epochs = 5;
        config.lr_milestones = vec![3, 3];
        assert!(config.validate().is_err());
        config.lr_milestones = vec![6];
        assert!(config.validate().is_err());
        config.lr_milestones = vec![2, 4];
        assert!(config.validate().is_ok());
    }
}
