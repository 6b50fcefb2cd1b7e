//! Quantitative evaluation: per-channel L1/L2 distances in RGB and L*a*b,
//! and Frechet Inception Distance with pluggable feature extractors.

pub mod distance;
pub mod evaluate;
pub mod extractors;
pub mod fid;
mod linalg;
pub mod report;

pub use distance::{channel_l1, channel_l2, channel_names};
pub use evaluate::{
    evaluate_colorization, evaluate_sr, ColorPrediction, ColorizePredictor, OracleColorize,
    OracleSr, SrPredictor,
};
pub use extractors::{FeatureExtractor, NetworkFeatures, PixelFeatures};
pub use fid::{fid, COV_EPSILON};
pub use report::{MetricsReport, ReportSpace};

use crate::colorspace::ImageGrid;
use crate::error::Result;

/// Extracts features from both image lists and delegates to [`fid`].
pub fn fid_from_images(
    preds: &[ImageGrid],
    reals: &[ImageGrid],
    extractor: &dyn FeatureExtractor,
) -> Result<f64> {
    let a = extractor.extract(preds)?;
    let b = extractor.extract(reals)?;
    fid(&a, &b)
}
