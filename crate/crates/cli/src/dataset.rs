//! `astrogan dataset fetch | split | prepare`

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Subcommand};

use astrogan_core::datapipe::{
    self, assign_splits, fetch_images, standardize_tiles, DatasetManifest, FetchOptions, Split,
};

use crate::user_error;

#[derive(Subcommand)]
pub enum DatasetCommand {
    /// Download (or copy) every manifest entry into the data directory.
    Fetch(FetchArgs),
    /// Assign deterministic train/test splits to a manifest.
    Split(SplitArgs),
    /// Standardize fetched images into side x side training tiles.
    Prepare(PrepareArgs),
}

#[derive(Args)]
pub struct FetchArgs {
    /// Manifest file (one JSON entry per line).
    #[arg(long)]
    manifest: PathBuf,
    /// Destination directory (defaults to $ASTRO_DATA_DIR, then ./data).
    #[arg(long)]
    dest: Option<PathBuf>,
    /// Requests per second across all workers.
    #[arg(long, default_value_t = 4.0)]
    rate_limit: f64,
    /// Concurrent download workers.
    #[arg(long, default_value_t = 4)]
    parallel: usize,
}

#[derive(Args)]
pub struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output manifest path.
    #[arg(long)]
    out: PathBuf,
    /// Fraction of entries assigned to the test split.
    #[arg(long, default_value_t = 0.10)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
pub struct PrepareArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding fetched images (defaults like --dest of fetch).
    #[arg(long)]
    images: Option<PathBuf>,
    /// Output directory; tiles land in <out>/train and <out>/test.
    #[arg(long)]
    out: PathBuf,
    /// Tile side length.
    #[arg(long, default_value_t = 256)]
    side: usize,
    /// Tiles per source image (1 = the centered crop only).
    #[arg(long, default_value_t = 1)]
    tiles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn data_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(datapipe::default_data_dir)
        .unwrap_or_else(|| PathBuf::from("data"))
}

pub fn run(cmd: DatasetCommand) -> anyhow::Result<()> {
    match cmd {
        DatasetCommand::Fetch(args) => fetch(args),
        DatasetCommand::Split(args) => split(args),
        DatasetCommand::Prepare(args) => prepare(args),
    }
}

fn fetch(args: FetchArgs) -> anyhow::Result<()> {
    let manifest = DatasetManifest::read_jsonl(&args.manifest)?;
    let dest = data_dir(args.dest);
    let opts = FetchOptions {
        rate_limit: args.rate_limit,
        parallelism: args.parallel,
    };
    let report = fetch_images(&manifest, &dest, &opts)?;
    let (fetched, skipped, failed) = report.counts();
    println!("fetched {fetched}, skipped {skipped}, failed {failed} -> {}", dest.display());
    for (id, reason) in &report.failed {
        println!("  failed {id}: {reason}");
    }
    Ok(())
}

fn split(args: SplitArgs) -> anyhow::Result<()> {
    let manifest = DatasetManifest::read_jsonl(&args.manifest)?;
    let assigned = assign_splits(&manifest, args.test_fraction, args.seed)?;
    assigned.write_jsonl(&args.out)?;
    let (train, test, _) = assigned.split_counts();
    println!(
        "assigned {train} train / {test} test entries -> {}",
        args.out.display()
    );
    Ok(())
}

fn prepare(args: PrepareArgs) -> anyhow::Result<()> {
    if args.tiles == 0 {
        return Err(user_error("--tiles must be at least 1"));
    }
    let manifest = DatasetManifest::read_jsonl(&args.manifest)?;
    let images = data_dir(args.images);
    let train_dir = args.out.join("train");
    let test_dir = args.out.join("test");
    std::fs::create_dir_all(&train_dir)?;
    std::fs::create_dir_all(&test_dir)?;

    let mut written = 0usize;
    let mut missing = 0usize;
    for entry in &manifest.entries {
        let src = datapipe::fetch::dest_path(&images, entry);
        if !src.exists() {
            log::warn!("missing image for '{}': {}", entry.id, src.display());
            missing += 1;
            continue;
        }
        let raw = datapipe::read_image(&src)
            .with_context(|| format!("decoding {}", src.display()))?;
        // per-entry seed derives from the run seed and the id so tile
        // positions do not depend on manifest ordering
        let entry_seed = args
            .seed
            .wrapping_add(entry.id.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64)));
        let tiles = standardize_tiles(&raw, args.side, args.tiles, entry_seed)?;
        let dir = match entry.split {
            Split::Test => &test_dir,
            Split::Train | Split::Unassigned => &train_dir,
        };
        for (i, tile) in tiles.iter().enumerate() {
            let path = dir.join(format!("{}_t{i}.png", entry.id));
            datapipe::write_png(tile, &path)?;
            written += 1;
        }
    }
    println!(
        "prepared {written} tiles ({} entries, {missing} missing) -> {}",
        manifest.entries.len(),
        args.out.display()
    );
    Ok(())
}
