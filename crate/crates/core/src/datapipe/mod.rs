//! Dataset acquisition, curation, and sample preparation: a manifest-driven
//! archive fetcher, tiling/resizing to the 256x256 working size, bicubic
//! LR synthesis for super-resolution, and deterministic train/test splits.

pub mod fetch;
pub mod io;
pub mod manifest;
pub mod resize;
pub mod samples;

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::colorspace::{ColorSpace, ImageGrid};
use crate::error::Result;

pub use fetch::{fetch_images, FetchOptions, FetchReport, FetchStatus};
pub use io::{read_image, write_png};
pub use manifest::{assign_splits, DatasetManifest, ManifestEntry, Split};
pub use resize::{downsample_bicubic, resize_bicubic, standardize_image};
pub use samples::{
    make_colorization_sample, make_sr_sample, reconstruct_colorization, ColorizationSample,
    SrSample, STANDARD_SIDE,
};

/// Environment variable naming the default dataset directory.
pub const DATA_DIR_ENV: &str = "ASTRO_DATA_DIR";

/// Default dataset directory from the environment, if set.
pub fn default_data_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
}

/// Cuts `count` side x side tiles from a raw image: the centered
/// standardized tile first, then seeded random crops of the
/// shorter-side-resized image. How many tiles each source image becomes is
/// dataset configuration, not a fixed constant.
pub fn standardize_tiles(
    raw: &ImageGrid,
    side: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<ImageGrid>> {
    let mut tiles = Vec::with_capacity(count);
    if count == 0 {
        return Ok(tiles);
    }
    tiles.push(standardize_image(raw, side)?);
    if count == 1 {
        return Ok(tiles);
    }
    let resized = resize::resize_shorter_side(raw, side);
    let (h, w, _) = resized.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 1..count {
        let y0 = if h > side { rng.random_range(0..=h - side) } else { 0 };
        let x0 = if w > side { rng.random_range(0..=w - side) } else { 0 };
        let crop = resized
            .slice(ndarray::s![y0..y0 + side, x0..x0 + side, ..])
            .to_owned();
        tiles.push(ImageGrid::new(crop, ColorSpace::Srgb8)?);
    }
    Ok(tiles)
}
