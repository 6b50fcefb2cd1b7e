//! Training-sample preparation for both tasks.

use crate::colorspace::{
    lab_to_rgb, merge_lab, normalize, rgb_to_lab, split_lab, ColorSpace, ImageGrid,
};
use crate::error::{Error, Result};

use super::resize::downsample_bicubic;

/// The paper's working image side length.
pub const STANDARD_SIDE: usize = 256;

/// (L-channel condition, ab-channel target) pair in normalized Lab units.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorizationSample {
    pub input_l: ImageGrid,
    pub target_ab: ImageGrid,
    pub id: String,
}

impl ColorizationSample {
    pub fn new(input_l: ImageGrid, target_ab: ImageGrid, id: impl Into<String>) -> Result<Self> {
        input_l.expect_space(ColorSpace::LabNorm)?;
        target_ab.expect_space(ColorSpace::LabNorm)?;
        if input_l.channels() != 1 || target_ab.channels() != 2 {
            return Err(Error::contract(format!(
                "expected 1 (L) + 2 (ab) channels, got {}+{}",
                input_l.channels(),
                target_ab.channels()
            )));
        }
        if (input_l.height(), input_l.width()) != (target_ab.height(), target_ab.width()) {
            return Err(Error::shape(
                format!("{}x{}", input_l.height(), input_l.width()),
                format!("{}x{}", target_ab.height(), target_ab.width()),
            ));
        }
        Ok(ColorizationSample {
            input_l,
            target_ab,
            id: id.into(),
        })
    }

    /// Builds a sample from any square RGB tile (the generator requires the
    /// side to divide by its total stride; 256 and 64 both work).
    pub fn from_rgb(img: &ImageGrid, id: impl Into<String>) -> Result<Self> {
        img.expect_space(ColorSpace::Srgb8)?;
        let lab = rgb_to_lab(img)?;
        let norm = normalize(&lab, ColorSpace::LabNorm)?;
        let (l, ab) = split_lab(&norm)?;
        ColorizationSample::new(l, ab, id)
    }
}

/// rgb -> Lab -> normalize -> split, at the standard 256x256 working size.
pub fn make_colorization_sample(img: &ImageGrid, id: impl Into<String>) -> Result<ColorizationSample> {
    img.expect_space(ColorSpace::Srgb8)?;
    if (img.height(), img.width(), img.channels()) != (STANDARD_SIDE, STANDARD_SIDE, 3) {
        return Err(Error::shape(
            format!("{STANDARD_SIDE}x{STANDARD_SIDE}x3"),
            format!("{}x{}x{}", img.height(), img.width(), img.channels()),
        ));
    }
    ColorizationSample::from_rgb(img, id)
}

/// Inverse of the colorization pipeline: merge predicted (or target) ab
/// with the conditioning L, denormalize and convert back to 8-bit sRGB.
pub fn reconstruct_colorization(l: &ImageGrid, ab: &ImageGrid) -> Result<ImageGrid> {
    let merged = merge_lab(l, ab)?;
    let raw = normalize(&merged, ColorSpace::LabRaw)?;
    lab_to_rgb(&raw)
}

/// (low-resolution input, high-resolution target) pair in unit sRGB.
#[derive(Debug, Clone, PartialEq)]
pub struct SrSample {
    pub input_lr: ImageGrid,
    pub target_hr: ImageGrid,
    pub scale: usize,
    pub id: String,
}

impl SrSample {
    pub fn new(
        input_lr: ImageGrid,
        target_hr: ImageGrid,
        scale: usize,
        id: impl Into<String>,
    ) -> Result<Self> {
        input_lr.expect_space(ColorSpace::SrgbUnit)?;
        target_hr.expect_space(ColorSpace::SrgbUnit)?;
        if target_hr.height() != input_lr.height() * scale
            || target_hr.width() != input_lr.width() * scale
        {
            return Err(Error::shape(
                format!(
                    "target dims exactly {}x the input ({}x{})",
                    scale,
                    input_lr.height(),
                    input_lr.width()
                ),
                format!("{}x{}", target_hr.height(), target_hr.width()),
            ));
        }
        Ok(SrSample {
            input_lr,
            target_hr,
            scale,
            id: id.into(),
        })
    }
}

/// Synthesizes an SR pair by bicubic decimation of the ground truth.
pub fn make_sr_sample(img: &ImageGrid, scale: usize, id: impl Into<String>) -> Result<SrSample> {
    img.expect_space(ColorSpace::Srgb8)?;
    if !matches!(scale, 2 | 4) {
        return Err(Error::contract(format!("scale must be 2 or 4, got {scale}")));
    }
    if img.height() % scale != 0 || img.width() % scale != 0 {
        return Err(Error::contract(format!(
            "dims {}x{} are not divisible by scale {scale}",
            img.height(),
            img.width()
        )));
    }
    let hr = normalize(img, ColorSpace::SrgbUnit)?;
    let lr = downsample_bicubic(&hr, scale)?;
    SrSample::new(lr, hr, scale, id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn gradient_rgb(side: usize) -> ImageGrid {
        let data = Array3::from_shape_fn((side, side, 3), |(y, x, c)| {
            ((y * 7 + x * 3 + c * 41) % 256) as f64
        });
        ImageGrid::new(data, ColorSpace::Srgb8).unwrap()
    }

    #[test]
    fn gray_image_has_near_zero_ab_target() {
        let img = ImageGrid::constant(256, 256, ColorSpace::Srgb8, &[128.0, 128.0, 128.0]).unwrap();
        let s = make_colorization_sample(&img, "gray").unwrap();
        assert!(s.target_ab.pixels().iter().all(|v| v.abs() < 0.01));
    }

    #[test]
    fn white_image_has_unit_l_input() {
        let img = ImageGrid::constant(256, 256, ColorSpace::Srgb8, &[255.0, 255.0, 255.0]).unwrap();
        let s = make_colorization_sample(&img, "white").unwrap();
        assert!(s.input_l.pixels().iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn reconstruction_is_within_one_8bit_step() {
        let img = gradient_rgb(256);
        let s = make_colorization_sample(&img, "grad").unwrap();
        let back = reconstruct_colorization(&s.input_l, &s.target_ab).unwrap();
        for (a, b) in back.pixels().iter().zip(img.pixels().iter()) {
            assert!((a - b).abs() <= 1.0, "{a} vs {b}");
        }
    }

    #[test]
    fn wrong_shape_rejected() {
        let img = gradient_rgb(128);
        assert!(make_colorization_sample(&img, "small").is_err());
        // but the general constructor accepts it
        assert!(ColorizationSample::from_rgb(&img, "small").is_ok());
    }

    #[test]
    fn sr_sample_dims_and_scale() {
        let img = gradient_rgb(256);
        let s = make_sr_sample(&img, 4, "x").unwrap();
        assert_eq!((s.input_lr.height(), s.input_lr.width()), (64, 64));
        assert_eq!((s.target_hr.height(), s.target_hr.width()), (256, 256));
        assert_eq!(s.scale, 4);
    }

    #[test]
    fn sr_scale_one_rejected() {
        let img = gradient_rgb(64);
        assert!(make_sr_sample(&img, 1, "x").is_err());
        assert!(make_sr_sample(&img, 3, "x").is_err());
    }

    #[test]
    fn sr_constant_image_stays_constant() {
        let img = ImageGrid::constant(64, 64, ColorSpace::Srgb8, &[100.0, 150.0, 200.0]).unwrap();
        let s = make_sr_sample(&img, 2, "c").unwrap();
        for ((_, _, c), v) in s.input_lr.pixels().indexed_iter() {
            let want = [100.0, 150.0, 200.0][c] / 255.0;
            assert!((v - want).abs() < 1e-9);
        }
    }
}
