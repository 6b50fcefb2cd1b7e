//! `astrogan colorize` and `astrogan upscale`: single-image inference.

use std::path::PathBuf;

use clap::Args;
use ndarray::{Array4, Axis};

use astrogan_core::colorspace::{
    normalize, rgb_to_lab, split_lab, ColorSpace, ImageGrid,
};
use astrogan_core::datapipe::{read_image, reconstruct_colorization, write_png};
use astrogan_core::models::{self, ModelKind, ModelParams, ModelSpec};

use crate::train::SrArch;
use crate::user_error;

#[derive(Args)]
pub struct ColorizeArgs {
    /// Input image (PNG/JPEG; color inputs are reduced to their L channel).
    pub input: PathBuf,
    /// Output PNG path.
    pub output: PathBuf,
    /// Trained colorizer weights.
    #[arg(long)]
    pub weights: PathBuf,
}

#[derive(Args)]
pub struct UpscaleArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Upscaling factor (must match the weights file when given).
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    /// Generator family (must match the weights file when given).
    #[arg(long, value_enum, default_value_t = SrArch::Wdsr)]
    pub arch: SrArch,
    /// Trained SR weights; without them a seeded untrained net runs.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

/// Replicate-pads a batch on the bottom/right so both spatial dims divide
/// `multiple`; returns the padded batch and the original dims.
fn pad_to_multiple(batch: &Array4<f64>, multiple: usize) -> (Array4<f64>, (usize, usize)) {
    let (b, c, h, w) = batch.dim();
    let ph = h.div_ceil(multiple) * multiple;
    let pw = w.div_ceil(multiple) * multiple;
    if (ph, pw) == (h, w) {
        return (batch.clone(), (h, w));
    }
    let mut out = Array4::zeros((b, c, ph, pw));
    for bi in 0..b {
        for ci in 0..c {
            for y in 0..ph {
                for x in 0..pw {
                    out[(bi, ci, y, x)] = batch[(bi, ci, y.min(h - 1), x.min(w - 1))];
                }
            }
        }
    }
    (out, (h, w))
}

pub fn colorize(args: ColorizeArgs) -> anyhow::Result<()> {
    let model = ModelParams::load(&args.weights)?;
    if model.spec().kind != ModelKind::UnetColorizer {
        return Err(user_error(format!(
            "colorize needs unet_colorizer weights, got {}",
            model.spec().summary()
        )));
    }
    // any channel count works: the image is reduced to its L channel
    let img = read_image(&args.input)?;
    let lab = normalize(&rgb_to_lab(&img)?, ColorSpace::LabNorm)?;
    let (l, _) = split_lab(&lab)?;

    let stride = 1usize << (model.spec().encoder_stages + 1);
    let (batch, (h, w)) = pad_to_multiple(&l.to_nchw(), stride);
    let out = models::forward(&model, &batch)?;
    let cropped = out.slice(ndarray::s![.., .., 0..h, 0..w]).to_owned();

    let result = if model.spec().out_channels == 2 {
        let ab = ImageGrid::from_chw(cropped.index_axis(Axis(0), 0), ColorSpace::LabNorm)?;
        reconstruct_colorization(&l, &ab)?
    } else {
        let rgb = cropped.index_axis(Axis(0), 0).mapv(|v| (v + 1.0) * 0.5 * 255.0);
        ImageGrid::from_chw(rgb.view(), ColorSpace::Srgb8)?
    };
    write_png(&result, &args.output)?;
    println!(
        "colorized {} -> {} ({}x{})",
        args.input.display(),
        args.output.display(),
        result.width(),
        result.height()
    );
    Ok(())
}

pub fn upscale(args: UpscaleArgs) -> anyhow::Result<()> {
    let model = match &args.weights {
        Some(path) => {
            let model = ModelParams::load(path)?;
            if !model.spec().kind.is_sr() {
                return Err(user_error(format!(
                    "upscale needs SR generator weights, got {}",
                    model.spec().summary()
                )));
            }
            if model.spec().scale != args.scale || model.spec().kind != args.arch.kind() {
                return Err(astrogan_core::Error::SpecMismatch {
                    expected: format!("{:?} at scale {}", args.arch.kind(), args.scale),
                    found: model.spec().summary(),
                }
                .into());
            }
            model
        }
        None => {
            log::warn!("no --weights given; running an untrained seeded generator");
            models::build_sr_generator(&ModelSpec::sr(args.arch.kind(), args.scale), 0)?
        }
    };

    let img = read_image(&args.input)?;
    let unit = normalize(&img, ColorSpace::SrgbUnit)?;
    let out = models::forward(&model, &unit.to_nchw())?;
    let rgb = out.index_axis(Axis(0), 0).mapv(|v| v * 255.0);
    let result = ImageGrid::from_chw(rgb.view(), ColorSpace::Srgb8)?;
    write_png(&result, &args.output)?;
    println!(
        "upscaled {} ({}x{}) -> {} ({}x{})",
        args.input.display(),
        img.width(),
        img.height(),
        args.output.display(),
        result.width(),
        result.height()
    );
    Ok(())
}
