//! `astrogan`: dataset preparation, two-stage training, inference and
//! evaluation for the colorization / super-resolution pipeline.
//!
//! Exit codes: 0 success, 1 user error (bad arguments, missing or
//! mismatched files), 2 internal error.

mod dataset;
mod eval;
mod infer;
mod train;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use astrogan_core::Error as CoreError;

#[derive(Parser)]
#[command(
    name = "astrogan",
    about = "Conditional-GAN colorization and 4x super-resolution for astronomical images",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset acquisition and preparation.
    #[command(subcommand)]
    Dataset(dataset::DatasetCommand),
    /// Supervised L1 pretraining of a generator.
    Pretrain(train::PretrainArgs),
    /// Adversarial fine-tuning of a pretrained generator.
    Finetune(train::FinetuneArgs),
    /// Colorize a grayscale (or color) image.
    Colorize(infer::ColorizeArgs),
    /// Upscale an image with an SR generator.
    Upscale(infer::UpscaleArgs),
    /// Evaluate a model over a prepared test set.
    Evaluate(eval::EvaluateArgs),
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::Contract(_)
            | CoreError::Manifest(_)
            | CoreError::SpaceMismatch { .. }
            | CoreError::ShapeMismatch { .. }
            | CoreError::SpecMismatch { .. }
            | CoreError::Weights { .. },
        ) => 1,
        Some(_) => 2,
        // plain argument/user problems raised by the CLI itself
        None if err.to_string().starts_with("user:") => 1,
        None => 2,
    }
}

/// User-facing errors raised by the CLI layer itself.
pub(crate) fn user_error(msg: impl std::fmt::Display) -> anyhow::Error {
    anyhow::anyhow!("user: {msg}")
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .target(env_logger::Target::Stdout)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage text goes to stderr; exit 1 on unknown flags/subcommands
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
            std::process::exit(code);
        }
    };

    let result = match cli.command {
        Command::Dataset(cmd) => dataset::run(cmd),
        Command::Pretrain(args) => train::pretrain(args),
        Command::Finetune(args) => train::finetune(args),
        Command::Colorize(args) => infer::colorize(args),
        Command::Upscale(args) => infer::upscale(args),
        Command::Evaluate(args) => eval::evaluate(args),
    };

    match result {
        Ok(()) => {}
        Err(err) => {
            let code = exit_code_for(&err);
            eprintln!("error: {}", err.to_string().trim_start_matches("user: "));
            std::process::exit(code);
        }
    }
}
