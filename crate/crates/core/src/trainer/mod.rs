//! Two-stage training protocol: supervised L1 pretraining of the
//! generator, then adversarial fine-tuning of generator and discriminator,
//! with constant-rate Adam, best-checkpointing by validation L1, and early
//! stopping.

mod config;
mod fit;
mod sample;
mod steps;

pub use config::{Stage, TrainConfig, PRESET_BATCH_SIZES, PRESET_EPOCHS};
pub use fit::{fine_tune, fit, FitOutcome, TrainState};
pub use sample::{RawSample, TrainSample};
pub use steps::{adversarial_step, pretrain_step, validation_l1, AdvStepOutcome};
