//! `astrogan pretrain` and `astrogan finetune`: config resolution
//! (flags > config file > defaults), sample loading, and the two training
//! stages.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use ndarray::Axis;
use serde::{Deserialize, Serialize};

use astrogan_core::colorspace::{ColorSpace, normalize};
use astrogan_core::datapipe::{read_image, standardize_image, ColorizationSample, SrSample};
use astrogan_core::datapipe::samples::make_sr_sample;
use astrogan_core::models::{self, ModelKind, ModelParams, ModelSpec};
use astrogan_core::trainer::{self, RawSample, Stage, TrainConfig};

use crate::user_error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Colorize,
    Sr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Predict (a, b) from the L channel.
    Lab,
    /// Predict full RGB from the grayscale rendition.
    Rgb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SrArch {
    Srgan,
    Edsr,
    Wdsr,
}

impl SrArch {
    pub fn kind(self) -> ModelKind {
        match self {
            SrArch::Srgan => ModelKind::Srresnet,
            SrArch::Edsr => ModelKind::Edsr,
            SrArch::Wdsr => ModelKind::Wdsr,
        }
    }
}

/// Flags shared by both training stages. Every `Option` can also come from
/// `--config <json>`; explicit flags win.
#[derive(Args, Clone)]
pub struct TrainFlags {
    /// JSON config file with the same keys as these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of prepared training tiles (PNG/JPEG).
    #[arg(long)]
    pub train: PathBuf,
    /// Directory of prepared validation tiles.
    #[arg(long)]
    pub val: PathBuf,
    /// Run output directory (checkpoints, histories, config echo).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub task: Option<Task>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub arch: Option<SrArch>,
    #[arg(long)]
    pub scale: Option<usize>,
    /// Training tile side; inputs are standardized to this size.
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long)]
    pub base_width: Option<usize>,
    #[arg(long)]
    pub encoder_stages: Option<usize>,
    #[arg(long)]
    pub res_blocks: Option<usize>,
    #[arg(long)]
    pub patch_layers: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Single seed feeding initialization, shuffling and tiling.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Weights file providing pretrained encoder arrays for the U-Net.
    #[arg(long)]
    pub encoder_weights: Option<PathBuf>,
}

#[derive(Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Generator checkpoint from the pretraining stage.
    #[arg(long)]
    pub gen: PathBuf,
    /// Discriminator checkpoint; a fresh patch discriminator is built when
    /// absent.
    #[arg(long)]
    pub disc: Option<PathBuf>,
}

/// The `--config` file mirror of [`TrainFlags`].
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    task: Option<Task>,
    mode: Option<Mode>,
    arch: Option<SrArch>,
    scale: Option<usize>,
    side: Option<usize>,
    base_width: Option<usize>,
    encoder_stages: Option<usize>,
    res_blocks: Option<usize>,
    patch_layers: Option<usize>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    lr: Option<f64>,
    patience: Option<usize>,
    lambda: Option<f64>,
    seed: Option<u64>,
}

/// Fully resolved settings, echoed to `<out>/run_config.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub task: Task,
    pub mode: Mode,
    pub arch: SrArch,
    pub scale: usize,
    pub side: usize,
    pub base_width: usize,
    pub encoder_stages: usize,
    pub res_blocks: usize,
    pub patch_layers: usize,
    pub train_dir: PathBuf,
    pub val_dir: PathBuf,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
}

impl RunConfig {
    fn resolve(flags: &TrainFlags, stage: Stage) -> anyhow::Result<RunConfig> {
        let file: FileConfig = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text).map_err(|e| user_error(format!("bad config: {e}")))?
            }
            None => FileConfig::default(),
        };
        let defaults = TrainConfig::default();
        let pick = |a: Option<usize>, b: Option<usize>, d: usize| a.or(b).unwrap_or(d);
        let cfg = RunConfig {
            task: flags.task.or(file.task).unwrap_or(Task::Colorize),
            mode: flags.mode.or(file.mode).unwrap_or(Mode::Lab),
            arch: flags.arch.or(file.arch).unwrap_or(SrArch::Srgan),
            scale: pick(flags.scale, file.scale, 4),
            side: pick(flags.side, file.side, 256),
            base_width: pick(flags.base_width, file.base_width, 64),
            encoder_stages: pick(flags.encoder_stages, file.encoder_stages, 4),
            res_blocks: pick(flags.res_blocks, file.res_blocks, 16),
            patch_layers: pick(flags.patch_layers, file.patch_layers, 3),
            train_dir: flags.train.clone(),
            val_dir: flags.val.clone(),
            out_dir: flags.out.clone(),
            train: TrainConfig {
                batch_size: pick(flags.batch_size, file.batch_size, defaults.batch_size),
                epochs: pick(flags.epochs, file.epochs, defaults.epochs),
                lr: flags.lr.or(file.lr).unwrap_or(defaults.lr),
                patience: pick(flags.patience, file.patience, defaults.patience),
                lambda_weight: flags.lambda.or(file.lambda).unwrap_or(defaults.lambda_weight),
                seed: flags.seed.or(file.seed).unwrap_or(0),
                stage,
                ..defaults
            },
        };
        cfg.train.validate()?;
        Ok(cfg)
    }

    fn echo(&self) -> anyhow::Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        fs::write(
            self.out_dir.join("run_config.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }

    fn generator_spec(&self) -> ModelSpec {
        match self.task {
            Task::Colorize => {
                let out_c = match self.mode {
                    Mode::Lab => 2,
                    Mode::Rgb => 3,
                };
                let mut spec = ModelSpec::unet_colorizer(out_c).with_width(self.base_width);
                spec.encoder_stages = self.encoder_stages;
                spec
            }
            Task::Sr => {
                let mut spec = ModelSpec::sr(self.arch.kind(), self.scale)
                    .with_width(self.base_width)
                    .with_res_blocks(self.res_blocks);
                spec.scale = self.scale;
                spec
            }
        }
    }

    fn discriminator_spec(&self) -> ModelSpec {
        let in_c = match (self.task, self.mode) {
            (Task::Colorize, Mode::Lab) => 1 + 2,
            (Task::Colorize, Mode::Rgb) => 1 + 3,
            (Task::Sr, _) => 3 + 3,
        };
        ModelSpec::patch_discriminator(in_c)
            .with_width(self.base_width)
            .with_patch_layers(self.patch_layers)
    }
}

/// Prepared samples for whichever task/mode is configured.
pub enum LoadedSet {
    ColorLab(Vec<ColorizationSample>),
    ColorRgb(Vec<RawSample>),
    Sr(Vec<SrSample>),
}

pub(crate) fn list_images(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
                Some(ref e) if e == "png" || e == "jpg" || e == "jpeg"
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(user_error(format!("no images found in {}", dir.display())));
    }
    Ok(files)
}

pub(crate) fn sample_id(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("sample")
        .to_string()
}

pub fn load_set(dir: &Path, cfg: &RunConfig) -> anyhow::Result<LoadedSet> {
    let files = list_images(dir)?;
    match (cfg.task, cfg.mode) {
        (Task::Colorize, Mode::Lab) => {
            let mut out = Vec::with_capacity(files.len());
            for f in files {
                let img = standardize_image(&read_image(&f)?, cfg.side)?;
                out.push(ColorizationSample::from_rgb(&img, sample_id(&f))?);
            }
            Ok(LoadedSet::ColorLab(out))
        }
        (Task::Colorize, Mode::Rgb) => {
            let mut out = Vec::with_capacity(files.len());
            for f in files {
                let img = standardize_image(&read_image(&f)?, cfg.side)?;
                let lab_sample = ColorizationSample::from_rgb(&img, sample_id(&f))?;
                let input = lab_sample
                    .input_l
                    .to_nchw()
                    .index_axis_move(Axis(0), 0);
                // target: 8-bit sRGB mapped onto the tanh range
                let unit = normalize(&img, ColorSpace::SrgbUnit)?;
                let target = unit.to_nchw().index_axis_move(Axis(0), 0).mapv(|v| 2.0 * v - 1.0);
                out.push(RawSample::new(sample_id(&f), input, target));
            }
            Ok(LoadedSet::ColorRgb(out))
        }
        (Task::Sr, _) => {
            let mut out = Vec::with_capacity(files.len());
            for f in files {
                let img = standardize_image(&read_image(&f)?, cfg.side)?;
                out.push(make_sr_sample(&img, cfg.scale, sample_id(&f))?);
            }
            Ok(LoadedSet::Sr(out))
        }
    }
}

fn run_fit(
    gen: &mut ModelParams,
    disc: Option<&mut ModelParams>,
    train_set: &LoadedSet,
    val_set: &LoadedSet,
    cfg: &TrainConfig,
    out: &Path,
) -> anyhow::Result<trainer::FitOutcome> {
    let outcome = match (train_set, val_set) {
        (LoadedSet::ColorLab(t), LoadedSet::ColorLab(v)) => {
            trainer::fit(gen, disc, t, v, cfg, out)?
        }
        (LoadedSet::ColorRgb(t), LoadedSet::ColorRgb(v)) => {
            trainer::fit(gen, disc, t, v, cfg, out)?
        }
        (LoadedSet::Sr(t), LoadedSet::Sr(v)) => trainer::fit(gen, disc, t, v, cfg, out)?,
        _ => return Err(user_error("train and val sets resolved to different tasks")),
    };
    Ok(outcome)
}

pub fn pretrain(args: PretrainArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(&args.flags, Stage::Pretrain)?;
    cfg.echo()?;
    let mut spec = cfg.generator_spec();
    if args.encoder_weights.is_some() {
        spec.pretrained_encoder = true;
    }
    let mut gen = if spec.kind == ModelKind::UnetColorizer {
        models::build_unet_generator(&spec, cfg.train.seed, args.encoder_weights.as_deref())?
    } else {
        models::build_sr_generator(&spec, cfg.train.seed)?
    };
    println!(
        "pretraining {} ({} parameters) on {}",
        spec.summary(),
        gen.param_count(),
        cfg.train_dir.display()
    );
    let train_set = load_set(&cfg.train_dir.clone(), &cfg)?;
    let val_set = load_set(&cfg.val_dir.clone(), &cfg)?;
    let outcome = run_fit(&mut gen, None, &train_set, &val_set, &cfg.train, &cfg.out_dir)?;
    println!(
        "done: {} epochs, best val L1 {:.6} -> {}",
        outcome.state.epoch,
        outcome.state.best_val_l1,
        cfg.out_dir.join("best.weights").display()
    );
    Ok(())
}

pub fn finetune(args: FinetuneArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(&args.flags, Stage::Adversarial)?;
    cfg.echo()?;
    let mut gen = ModelParams::load(&args.gen)?;
    let want = cfg.generator_spec();
    // the checkpoint's embedded spec governs; a conflicting explicit config
    // is a user error
    if gen.spec().kind != want.kind || gen.spec().out_channels != want.out_channels {
        return Err(astrogan_core::Error::SpecMismatch {
            expected: want.summary(),
            found: gen.spec().summary(),
        }
        .into());
    }
    let mut disc = match &args.disc {
        Some(path) => ModelParams::load(path)?,
        None => models::build_patch_discriminator(&cfg.discriminator_spec(), cfg.train.seed)?,
    };
    println!(
        "fine-tuning {} against {} on {}",
        gen.spec().summary(),
        disc.spec().summary(),
        cfg.train_dir.display()
    );
    let train_set = load_set(&cfg.train_dir.clone(), &cfg)?;
    let val_set = load_set(&cfg.val_dir.clone(), &cfg)?;
    let outcome = run_fit(
        &mut gen,
        Some(&mut disc),
        &train_set,
        &val_set,
        &cfg.train,
        &cfg.out_dir,
    )?;
    println!(
        "done: {} epochs, best val L1 {:.6} -> {}",
        outcome.state.epoch,
        outcome.state.best_val_l1,
        cfg.out_dir.join("best.weights").display()
    );
    Ok(())
}
