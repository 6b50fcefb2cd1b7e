//! Training configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::DEFAULT_LAMBDA;

/// Batch sizes used across the experimental runs.
pub const PRESET_BATCH_SIZES: [usize; 3] = [10, 16, 32];
/// Epoch-count presets.
pub const PRESET_EPOCHS: [usize; 3] = [20, 50, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Supervised generator training on mean absolute error.
    Pretrain,
    /// Alternating discriminator/generator updates on the GAN objective.
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Constant learning rate for both networks.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Early-stopping patience in epochs without validation improvement.
    pub patience: usize,
    pub lambda_weight: f64,
    pub seed: u64,
    pub stage: Stage,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: PRESET_BATCH_SIZES[0],
            epochs: PRESET_EPOCHS[1],
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            patience: 10,
            lambda_weight: DEFAULT_LAMBDA,
            seed: 0,
            stage: Stage::Pretrain,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::contract(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::contract(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if self.patience == 0 {
            return Err(Error::contract("patience must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch_size must be positive"));
        }
        if self.lambda_weight < 0.0 {
            return Err(Error::contract("lambda_weight must be non-negative"));
        }
        Ok(())
    }
}
