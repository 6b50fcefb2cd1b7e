//! Conditional-GAN pipeline for astronomical image colorization and 4x
//! single-image super-resolution.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`colorspace`]: exact sRGB / CIELAB / grayscale conversions and the
//!   normalization conventions that map channels into network ranges.
//! - [`datapipe`]: manifest-driven dataset fetching, 256x256 standardization,
//!   bicubic LR synthesis and deterministic train/test splitting.
//! - [`nn`]: a small define-by-run autodiff tape over `ndarray` (f64) with
//!   the layer ops the models need.
//! - [`models`]: the U-Net colorizer with a residual-network encoder, the
//!   patch discriminator, and the SRResNet / EDSR / WDSR generator families.
//! - [`objective`]: conditional-GAN losses with the lambda-weighted L1
//!   content term.
//! - [`trainer`]: the two-stage (supervised pretrain, adversarial fine-tune)
//!   training protocol with Adam, best-checkpointing and early stopping.
//! - [`metrics`]: per-channel L1/L2 distances in RGB and L*a*b plus Frechet
//!   Inception Distance with pluggable feature extractors.
//!
//! Everything is deterministic given a seed: forward passes inject no noise,
//! shuffles and initializers draw from explicitly seeded ChaCha streams, and
//! weight files round-trip bitwise.

pub mod colorspace;
pub mod datapipe;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod objective;
pub mod trainer;

pub use error::{Error, Result};
