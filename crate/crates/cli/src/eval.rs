//! `astrogan evaluate`: distances and FID over a prepared test set.

use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};

use astrogan_core::datapipe::samples::make_sr_sample;
use astrogan_core::datapipe::{read_image, standardize_image, ColorizationSample};
use astrogan_core::metrics::{
    evaluate_colorization, evaluate_sr, FeatureExtractor, MetricsReport, NetworkFeatures,
    OracleColorize, OracleSr, PixelFeatures, ReportSpace,
};
use astrogan_core::models::ModelParams;

use crate::train::{list_images, sample_id, Task};
use crate::user_error;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpaceArg {
    Rgb,
    Lab,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Directory of prepared test tiles.
    #[arg(long)]
    pub data: PathBuf,
    /// Color space the distances are reported in.
    #[arg(long, value_enum)]
    pub space: SpaceArg,
    #[arg(long, value_enum, default_value_t = Task::Colorize)]
    pub task: Task,
    /// Trained model weights (omit when using --model oracle).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// `oracle` evaluates the ground-truth stub (self-check: all zeros).
    #[arg(long)]
    pub model: Option<String>,
    /// Also compute FID.
    #[arg(long)]
    pub fid: bool,
    /// Discriminator-style weights for deep FID features (default: pooled
    /// pixel features).
    #[arg(long)]
    pub fid_weights: Option<PathBuf>,
    /// Pixel-feature pooling grid.
    #[arg(long, default_value_t = 8)]
    pub fid_pool: usize,
    /// Write the JSON report here in addition to the stdout table.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Tile side used when standardizing the test images.
    #[arg(long, default_value_t = 256)]
    pub side: usize,
    /// SR scale factor (task sr).
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
}

fn finish(report: MetricsReport, dest: Option<&PathBuf>) -> anyhow::Result<()> {
    print!("{}", report.to_table());
    if let Some(path) = dest {
        fs::write(path, report.to_json()?)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let space = match args.space {
        SpaceArg::Rgb => ReportSpace::Rgb,
        SpaceArg::Lab => ReportSpace::Lab,
    };
    let use_oracle = match (args.model.as_deref(), args.weights.as_ref()) {
        (Some("oracle"), None) => true,
        (None, Some(_)) => false,
        (Some(other), None) => {
            return Err(user_error(format!(
                "unknown --model '{other}' (only 'oracle' is built in; use --weights for files)"
            )))
        }
        (Some(_), Some(_)) => {
            return Err(user_error("--model and --weights are mutually exclusive"))
        }
        (None, None) => return Err(user_error("one of --weights or --model is required")),
    };

    let extractor: Option<Box<dyn FeatureExtractor>> = if args.fid {
        Some(match &args.fid_weights {
            Some(path) => Box::new(NetworkFeatures::from_weights_file(path)?),
            None => Box::new(PixelFeatures::new(args.fid_pool, 3)),
        })
    } else {
        None
    };
    let extractor_ref = extractor.as_deref();

    let files = list_images(&args.data)?;
    match args.task {
        Task::Colorize => {
            let mut set = Vec::with_capacity(files.len());
            for f in &files {
                let img = standardize_image(&read_image(f)?, args.side)?;
                set.push(ColorizationSample::from_rgb(&img, sample_id(f))?);
            }
            let report = if use_oracle {
                evaluate_colorization(&OracleColorize, &set, space, extractor_ref)?
            } else {
                let model = ModelParams::load(args.weights.as_ref().unwrap())?;
                evaluate_colorization(&model, &set, space, extractor_ref)?
            };
            finish(report, args.report.as_ref())
        }
        Task::Sr => {
            let mut set = Vec::with_capacity(files.len());
            for f in &files {
                let img = standardize_image(&read_image(f)?, args.side)?;
                set.push(make_sr_sample(&img, args.scale, sample_id(f))?);
            }
            let report = if use_oracle {
                evaluate_sr(&OracleSr, &set, space, extractor_ref)?
            } else {
                let model = ModelParams::load(args.weights.as_ref().unwrap())?;
                evaluate_sr(&model, &set, space, extractor_ref)?
            };
            finish(report, args.report.as_ref())
        }
    }
}
