//! End-to-end model evaluation: run inference over a test set, reconstruct
//! full images, and report per-channel distances (plus FID when a feature
//! extractor is supplied) in the requested color space.

use ndarray::Axis;

use crate::colorspace::{normalize, rgb_to_lab, ColorSpace, ImageGrid};
use crate::datapipe::samples::{reconstruct_colorization, ColorizationSample, SrSample};
use crate::error::{Error, Result};
use crate::models::{self, ModelKind, ModelParams};

use super::distance::{channel_l1, channel_l2};
use super::extractors::FeatureExtractor;
use super::fid::fid;
use super::report::{MetricsReport, ReportSpace};

/// Output of a colorization predictor: either the (a, b) channels to merge
/// with the conditioning L, or a full RGB image (the grayscale-to-RGB mode).
#[derive(Debug, Clone)]
pub enum ColorPrediction {
    Ab(ImageGrid),
    Rgb(ImageGrid),
}

/// Something that can colorize a sample. Implemented by [`ModelParams`]
/// and by the oracle stub used to validate the metrics plumbing.
pub trait ColorizePredictor {
    fn name(&self) -> String;
    fn predict(&self, sample: &ColorizationSample) -> Result<ColorPrediction>;
}

/// Something that can super-resolve a sample.
pub trait SrPredictor {
    fn name(&self) -> String;
    fn predict(&self, sample: &SrSample) -> Result<ImageGrid>;
}

impl ColorizePredictor for ModelParams {
    fn name(&self) -> String {
        format!("{:?}", self.spec().kind)
    }

    fn predict(&self, sample: &ColorizationSample) -> Result<ColorPrediction> {
        if self.spec().kind != ModelKind::UnetColorizer {
            return Err(Error::contract(format!(
                "colorization needs a unet_colorizer, got {:?}",
                self.spec().kind
            )));
        }
        let batch = sample.input_l.to_nchw();
        let out = models::forward(self, &batch).map_err(|e| Error::Sample {
            id: sample.id.clone(),
            reason: e.to_string(),
        })?;
        let chw = out.index_axis(Axis(0), 0);
        if self.spec().out_channels == 2 {
            Ok(ColorPrediction::Ab(ImageGrid::from_chw(
                chw,
                ColorSpace::LabNorm,
            )?))
        } else {
            // tanh output in (-1,1) mapped onto 8-bit sRGB
            let rgb = chw.mapv(|v| (v + 1.0) * 0.5 * 255.0);
            Ok(ColorPrediction::Rgb(ImageGrid::from_chw(
                rgb.view(),
                ColorSpace::Srgb8,
            )?))
        }
    }
}

impl SrPredictor for ModelParams {
    fn name(&self) -> String {
        format!("{:?}", self.spec().kind)
    }

    fn predict(&self, sample: &SrSample) -> Result<ImageGrid> {
        if !self.spec().kind.is_sr() {
            return Err(Error::contract(format!(
                "super-resolution needs an SR generator, got {:?}",
                self.spec().kind
            )));
        }
        let batch = sample.input_lr.to_nchw();
        let out = models::forward(self, &batch).map_err(|e| Error::Sample {
            id: sample.id.clone(),
            reason: e.to_string(),
        })?;
        ImageGrid::from_chw(out.index_axis(Axis(0), 0), ColorSpace::SrgbUnit)
    }
}

/// Oracle stub: predicts the ground truth. All distances must be zero and
/// FID must vanish; used to validate the evaluation path end to end.
pub struct OracleColorize;

impl ColorizePredictor for OracleColorize {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict(&self, sample: &ColorizationSample) -> Result<ColorPrediction> {
        Ok(ColorPrediction::Ab(sample.target_ab.clone()))
    }
}

/// Oracle stub for the SR task.
pub struct OracleSr;

impl SrPredictor for OracleSr {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict(&self, sample: &SrSample) -> Result<ImageGrid> {
        Ok(sample.target_hr.clone())
    }
}

fn to_lab_norm(rgb8: &ImageGrid) -> Result<ImageGrid> {
    normalize(&rgb_to_lab(rgb8)?, ColorSpace::LabNorm)
}

fn scale_to_8bit(unit: &ImageGrid) -> Result<ImageGrid> {
    normalize(unit, ColorSpace::Srgb8)
}

/// Evaluates a colorization model over a test set.
///
/// Lab-mode models report channels {a, b} in normalized Lab units; RGB
/// reports are in 8-bit units on the reconstructed images. FID always
/// compares the reconstructed sRGB images.
pub fn evaluate_colorization<P: ColorizePredictor>(
    model: &P,
    test_set: &[ColorizationSample],
    space: ReportSpace,
    extractor: Option<&dyn FeatureExtractor>,
) -> Result<MetricsReport> {
    if test_set.is_empty() {
        return Err(Error::contract("test set must not be empty"));
    }
    let mut preds_space = Vec::with_capacity(test_set.len());
    let mut targets_space = Vec::with_capacity(test_set.len());
    let mut preds_rgb = Vec::with_capacity(test_set.len());
    let mut targets_rgb = Vec::with_capacity(test_set.len());

    for sample in test_set {
        let prediction = model.predict(sample)?;
        let target_rgb = reconstruct_colorization(&sample.input_l, &sample.target_ab)?;
        let pred_rgb = match &prediction {
            ColorPrediction::Ab(ab) => reconstruct_colorization(&sample.input_l, ab)?,
            ColorPrediction::Rgb(rgb) => rgb.clone(),
        };
        match space {
            ReportSpace::Rgb => {
                preds_space.push(pred_rgb.clone());
                targets_space.push(target_rgb.clone());
            }
            ReportSpace::Lab => match &prediction {
                // predicted quantities are the (a, b) planes; compare those
                ColorPrediction::Ab(ab) => {
                    preds_space.push(ab.clone());
                    targets_space.push(sample.target_ab.clone());
                }
                ColorPrediction::Rgb(_) => {
                    preds_space.push(to_lab_norm(&pred_rgb)?);
                    targets_space.push(to_lab_norm(&target_rgb)?);
                }
            },
        }
        preds_rgb.push(pred_rgb);
        targets_rgb.push(target_rgb);
    }

    let fid_value = match extractor {
        Some(ex) => Some(fid(&ex.extract(&preds_rgb)?, &ex.extract(&targets_rgb)?)?),
        None => None,
    };
    MetricsReport::new(
        model.name(),
        space,
        channel_l1(&preds_space, &targets_space)?,
        channel_l2(&preds_space, &targets_space)?,
        fid_value,
        test_set.len(),
    )
}

/// Evaluates an SR model over a test set. RGB reports are in 8-bit units;
/// Lab reports are in normalized Lab units of the converted images.
pub fn evaluate_sr<P: SrPredictor>(
    model: &P,
    test_set: &[SrSample],
    space: ReportSpace,
    extractor: Option<&dyn FeatureExtractor>,
) -> Result<MetricsReport> {
    if test_set.is_empty() {
        return Err(Error::contract("test set must not be empty"));
    }
    let mut preds_space = Vec::with_capacity(test_set.len());
    let mut targets_space = Vec::with_capacity(test_set.len());
    let mut preds_rgb = Vec::with_capacity(test_set.len());
    let mut targets_rgb = Vec::with_capacity(test_set.len());

    for sample in test_set {
        let pred_hr = model.predict(sample)?;
        if pred_hr.pixels().dim() != sample.target_hr.pixels().dim() {
            return Err(Error::Sample {
                id: sample.id.clone(),
                reason: format!(
                    "prediction dims {:?} do not match target {:?}",
                    pred_hr.pixels().dim(),
                    sample.target_hr.pixels().dim()
                ),
            });
        }
        let pred_rgb = scale_to_8bit(&pred_hr)?;
        let target_rgb = scale_to_8bit(&sample.target_hr)?;
        match space {
            ReportSpace::Rgb => {
                preds_space.push(pred_rgb.clone());
                targets_space.push(target_rgb.clone());
            }
            ReportSpace::Lab => {
                preds_space.push(to_lab_norm(&pred_rgb)?);
                targets_space.push(to_lab_norm(&target_rgb)?);
            }
        }
        preds_rgb.push(pred_rgb);
        targets_rgb.push(target_rgb);
    }

    let fid_value = match extractor {
        Some(ex) => Some(fid(&ex.extract(&preds_rgb)?, &ex.extract(&targets_rgb)?)?),
        None => None,
    };
    MetricsReport::new(
        model.name(),
        space,
        channel_l1(&preds_space, &targets_space)?,
        channel_l2(&preds_space, &targets_space)?,
        fid_value,
        test_set.len(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::samples::make_sr_sample;
    use crate::metrics::extractors::PixelFeatures;
    use ndarray::Array3;

    fn color_sample(id: &str, shift: f64) -> ColorizationSample {
        let data = Array3::from_shape_fn((64, 64, 3), |(y, x, c)| {
            (((y * 3 + x * 5) as f64 + shift) + c as f64 * 40.0) % 256.0
        });
        let img = ImageGrid::new(data, ColorSpace::Srgb8).unwrap();
        ColorizationSample::from_rgb(&img, id).unwrap()
    }

    #[test]
    fn oracle_colorize_reports_zero_everything() {
        let set: Vec<_> = (0..4).map(|i| color_sample(&format!("s{i}"), i as f64 * 11.0)).collect();
        let ex = PixelFeatures::new(4, 3);
        for space in [ReportSpace::Lab, ReportSpace::Rgb] {
            let r = evaluate_colorization(&OracleColorize, &set, space, Some(&ex)).unwrap();
            assert!(r.per_channel_l1.values().all(|&v| v == 0.0), "{space}: {r:?}");
            assert!(r.per_channel_l2.values().all(|&v| v == 0.0));
            assert!(r.fid.unwrap() < 1e-6);
            assert_eq!(r.n_images, 4);
        }
    }

    #[test]
    fn lab_mode_reports_ab_channels_only() {
        let set = vec![color_sample("a", 0.0)];
        let r = evaluate_colorization(&OracleColorize, &set, ReportSpace::Lab, None).unwrap();
        let keys: Vec<_> = r.per_channel_l1.keys().cloned().collect();
        assert_eq!(keys, vec!["a".to_string(), "b".to_string()]);
        let r = evaluate_colorization(&OracleColorize, &set, ReportSpace::Rgb, None).unwrap();
        let keys: Vec<_> = r.per_channel_l1.keys().cloned().collect();
        assert_eq!(keys, vec!["B".to_string(), "G".to_string(), "R".to_string()]);
    }

    #[test]
    fn oracle_sr_reports_zero() {
        let img = ImageGrid::constant(32, 32, ColorSpace::Srgb8, &[50.0, 100.0, 150.0]).unwrap();
        let set = vec![make_sr_sample(&img, 2, "s").unwrap()];
        let ex = PixelFeatures::new(4, 3);
        let r = evaluate_sr(&OracleSr, &set, ReportSpace::Rgb, Some(&ex)).unwrap();
        assert!(r.per_channel_l1.values().all(|&v| v == 0.0));
        assert!(r.fid.unwrap() < 1e-6);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let set: Vec<_> = (0..3).map(|i| color_sample(&format!("s{i}"), i as f64)).collect();
        let spec = crate::models::ModelSpec::unet_colorizer(2).with_width(8);
        let model = crate::models::build(&spec, 3).unwrap();
        let a = evaluate_colorization(&model, &set, ReportSpace::Lab, None).unwrap();
        let b = evaluate_colorization(&model, &set, ReportSpace::Lab, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_test_set_rejected() {
        let r = evaluate_colorization(&OracleColorize, &[], ReportSpace::Lab, None);
        assert!(r.is_err());
    }
}
