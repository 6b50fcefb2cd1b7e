//! Pluggable feature extractors for FID.
//!
//! Two are shipped: a pixel-level extractor (average-pooled raw pixels,
//! hermetic, used by the test suite) and a network extractor that loads a
//! discriminator-style model from a weights file and global-average-pools
//! its penultimate activations, the inception-style route for
//! paper-comparable numbers.

use std::path::Path;

use ndarray::Array2;

use crate::colorspace::{ColorSpace, ImageGrid};
use crate::error::{Error, Result};
use crate::models::{self, ModelParams};

/// Maps image batches to fixed-dimension feature rows, deterministically.
pub trait FeatureExtractor: Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, images: &[ImageGrid]) -> Result<Array2<f64>>;
}

/// Scales a pixel value into [0, 1] for feature purposes.
fn unit_scale(space: ColorSpace, v: f64) -> f64 {
    match space {
        ColorSpace::Srgb8 => v / 255.0,
        ColorSpace::SrgbUnit | ColorSpace::GrayUnit => v,
        ColorSpace::LabNorm => (v + 1.0) / 2.0,
        ColorSpace::LabRaw => v / 100.0,
    }
}

/// Raw-pixel features: average-pools each channel onto a `pool` x `pool`
/// grid and flattens. With `pool` equal to the image side this is the
/// identity on pixels.
pub struct PixelFeatures {
    pool: usize,
    channels: usize,
}

impl PixelFeatures {
    pub fn new(pool: usize, channels: usize) -> Self {
        assert!(pool > 0 && channels > 0);
        PixelFeatures { pool, channels }
    }
}

impl FeatureExtractor for PixelFeatures {
    fn name(&self) -> &str {
        "pixels"
    }

    fn dim(&self) -> usize {
        self.pool * self.pool * self.channels
    }

    fn extract(&self, images: &[ImageGrid]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((images.len(), self.dim()));
        for (row, img) in images.iter().enumerate() {
            if img.channels() != self.channels {
                return Err(Error::shape(
                    format!("{} channels", self.channels),
                    format!("{}", img.channels()),
                ));
            }
            if img.height() < self.pool || img.width() < self.pool {
                return Err(Error::shape(
                    format!("images at least {0}x{0}", self.pool),
                    format!("{}x{}", img.height(), img.width()),
                ));
            }
            let space = img.space();
            let (h, w) = (img.height(), img.width());
            // adaptive average pooling: cell (i, j) covers rows
            // [i*h/pool, (i+1)*h/pool) and the analogous columns
            for i in 0..self.pool {
                let y0 = i * h / self.pool;
                let y1 = ((i + 1) * h / self.pool).max(y0 + 1);
                for j in 0..self.pool {
                    let x0 = j * w / self.pool;
                    let x1 = ((j + 1) * w / self.pool).max(x0 + 1);
                    for c in 0..self.channels {
                        let mut acc = 0.0;
                        for y in y0..y1 {
                            for x in x0..x1 {
                                acc += unit_scale(space, img.pixels()[(y, x, c)]);
                            }
                        }
                        let cell = acc / ((y1 - y0) * (x1 - x0)) as f64;
                        out[(row, (i * self.pool + j) * self.channels + c)] = cell;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Deep features from a discriminator-style network loaded from a weights
/// file: the penultimate activation map, global-average-pooled per channel.
pub struct NetworkFeatures {
    params: ModelParams,
    label: String,
    dim: usize,
}

impl NetworkFeatures {
    pub fn from_weights_file(path: &Path) -> Result<Self> {
        let params = ModelParams::load(path)?;
        Self::from_params(params)
    }

    pub fn from_params(params: ModelParams) -> Result<Self> {
        if !params.spec().kind.is_discriminator() {
            return Err(Error::contract(
                "network feature extraction needs a discriminator-style model",
            ));
        }
        // probe the feature dimension with a minimal batch
        let side = 2usize.pow(params.spec().patch_layers.max(4) as u32) * 4;
        let probe = ndarray::Array4::zeros((1, params.spec().in_channels, side, side));
        let dim = models::forward_features(&params, &probe)?.dim().1;
        Ok(NetworkFeatures {
            label: format!("{:?}", params.spec().kind),
            params,
            dim,
        })
    }
}

impl FeatureExtractor for NetworkFeatures {
    fn name(&self) -> &str {
        &self.label
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, images: &[ImageGrid]) -> Result<Array2<f64>> {
        let want_c = self.params.spec().in_channels;
        let mut out = Array2::zeros((images.len(), self.dim));
        for (row, img) in images.iter().enumerate() {
            if img.channels() != want_c {
                return Err(Error::shape(
                    format!("{want_c} channels"),
                    format!("{}", img.channels()),
                ));
            }
            let space = img.space();
            let mut batch = img.to_nchw();
            batch.mapv_inplace(|v| unit_scale(space, v));
            let feats = models::forward_features(&self.params, &batch)?;
            out.row_mut(row).assign(&feats.row(0));
        }
        Ok(out)
    }
}
