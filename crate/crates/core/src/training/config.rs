use serde::{Deserialize, Serialize};

use crate::dataset::ResampleStrategy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    /// Inverse-frequency weights `N / (C * n_c)` from the training partition.
    #[default]
    #[serde(rename = "inverse_frequency")]
    InverseFrequency,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without a strict decrease of validation MAE before stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub loss_weighting: LossWeighting,
    /// Optional rebalancing of the training partition before weighting.
    pub resample: Option<ResampleStrategy>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 0.001,
            max_epochs: 100,
            batch_size: 256,
            early_stop_patience: 20,
            seed: 0,
            loss_weighting: LossWeighting::InverseFrequency,
            resample: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                "training.learning_rate",
                format!("must be a positive finite number, got {}", self.learning_rate),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("training.batch_size", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("training.max_epochs", "must be at least 1"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::config("training.early_stop_patience", "must be at least 1"));
        }
        if self.early_stop_patience > self.max_epochs {
            return Err(Error::config(
                "training.early_stop_patience",
                format!(
                    "must not exceed max_epochs ({} > {})",
                    self.early_stop_patience, self.max_epochs
                ),
            ));
        }
        Ok(())
    }
}
