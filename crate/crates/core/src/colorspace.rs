//! Color-space machinery: exact, invertible conversions between sRGB,
//! grayscale and CIELAB, plus the normalization conventions that map
//! channels into network-friendly ranges.
//!
//! Conventions:
//! - sRGB uses the standard IEC 61966-2-1 companding and the D65 white
//!   point. The white point is taken as the row sums of the RGB->XYZ
//!   matrix so that (255,255,255) maps to exactly L=100, a=b=0.
//! - `LabNorm` maps L to L/50 - 1 and a, b to a/110, b/110, clamped to
//!   [-1, 1]; this keeps real image chroma inside the tanh output range.
//! - Out-of-gamut Lab values clamp on the way back to sRGB rather than
//!   erroring, so unconstrained generator outputs always render.
//!
//! All functions here are pure; they can be called concurrently.

use std::fmt;
use std::sync::LazyLock;

use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declared color space (and therefore value range) of an [`ImageGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorSpace {
    /// 8-bit sRGB, three channels in [0, 255].
    Srgb8,
    /// Unit-range sRGB, three channels in [0, 1].
    SrgbUnit,
    /// CIELAB: L in [0, 100], a and b in [-128, 127].
    LabRaw,
    /// Network-normalized CIELAB, all channels in [-1, 1].
    LabNorm,
    /// Single-channel luma in [0, 1].
    GrayUnit,
}

impl ColorSpace {
    /// Channel counts permitted for images declared in this space.
    ///
    /// `LabNorm` additionally admits the 1-channel (L-only) and 2-channel
    /// (ab-only) grids produced by [`split_lab`].
    pub fn allowed_channels(self) -> &'static [usize] {
        match self {
            ColorSpace::Srgb8 | ColorSpace::SrgbUnit | ColorSpace::LabRaw => &[3],
            ColorSpace::LabNorm => &[1, 2, 3],
            ColorSpace::GrayUnit => &[1],
        }
    }

    /// Inclusive value range of a channel in this space.
    ///
    /// `channel` indexes into the full 3-channel layout; for ab-only grids
    /// pass the original channel index (1 or 2).
    pub fn channel_range(self, channel: usize) -> (f64, f64) {
        match self {
            ColorSpace::Srgb8 => (0.0, 255.0),
            ColorSpace::SrgbUnit | ColorSpace::GrayUnit => (0.0, 1.0),
            ColorSpace::LabRaw => {
                if channel == 0 {
                    (0.0, 100.0)
                } else {
                    (-128.0, 127.0)
                }
            }
            ColorSpace::LabNorm => (-1.0, 1.0),
        }
    }
}

impl fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ColorSpace::Srgb8 => "SRGB_8BIT",
            ColorSpace::SrgbUnit => "SRGB_UNIT",
            ColorSpace::LabRaw => "LAB_RAW",
            ColorSpace::LabNorm => "LAB_NORM",
            ColorSpace::GrayUnit => "GRAY_UNIT",
        };
        f.write_str(name)
    }
}

/// H x W x C raster of 64-bit floats with a declared color space.
///
/// Construction clamps every value into the declared range of the space,
/// so a well-typed `ImageGrid` always satisfies its range invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    data: Array3<f64>,
    space: ColorSpace,
}

impl ImageGrid {
    /// Wraps an H x W x C array, clamping values into the space's range.
    pub fn new(mut data: Array3<f64>, space: ColorSpace) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::contract(format!(
                "image dimensions must be positive, got {h}x{w}"
            )));
        }
        if !space.allowed_channels().contains(&c) {
            return Err(Error::contract(format!(
                "{space} admits {:?} channels, got {c}",
                space.allowed_channels()
            )));
        }
        // For 2-channel LabNorm grids the channels are (a, b); the range is
        // uniform in LabNorm so indexing does not matter there.
        for (ch, mut lane) in data.axis_iter_mut(Axis(2)).enumerate() {
            let (lo, hi) = space.channel_range(ch);
            lane.mapv_inplace(|v| v.clamp(lo, hi));
        }
        Ok(ImageGrid { data, space })
    }

    /// A side x side.. grid filled with one pixel value (len must match channels).
    pub fn constant(height: usize, width: usize, space: ColorSpace, pixel: &[f64]) -> Result<Self> {
        let c = pixel.len();
        let data = Array3::from_shape_fn((height, width, c), |(_, _, ch)| pixel[ch]);
        ImageGrid::new(data, space)
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_pixels(self) -> Array3<f64> {
        self.data
    }

    pub(crate) fn expect_space(&self, expected: ColorSpace) -> Result<()> {
        if self.space != expected {
            return Err(Error::SpaceMismatch {
                expected,
                actual: self.space,
            });
        }
        Ok(())
    }

    /// H x W x C grid as a single-image NCHW batch (1, C, H, W).
    pub fn to_nchw(&self) -> ndarray::Array4<f64> {
        let (h, w, c) = self.data.dim();
        ndarray::Array4::from_shape_fn((1, c, h, w), |(_, ch, y, x)| self.data[(y, x, ch)])
    }

    /// Builds a grid from one CHW slice of a batch, clamping into `space`.
    pub fn from_chw(chw: ndarray::ArrayView3<f64>, space: ColorSpace) -> Result<Self> {
        let (c, h, w) = chw.dim();
        let data = Array3::from_shape_fn((h, w, c), |(y, x, ch)| chw[(ch, y, x)]);
        ImageGrid::new(data, space)
    }
}

/// sRGB primaries -> XYZ under D65 (IEC 61966-2-1 reference matrix).
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// White point: linear RGB (1,1,1) through the matrix above, which makes
/// the reference white land exactly on L=100, a=b=0.
const WHITE: [f64; 3] = [
    RGB_TO_XYZ[0][0] + RGB_TO_XYZ[0][1] + RGB_TO_XYZ[0][2],
    RGB_TO_XYZ[1][0] + RGB_TO_XYZ[1][1] + RGB_TO_XYZ[1][2],
    RGB_TO_XYZ[2][0] + RGB_TO_XYZ[2][1] + RGB_TO_XYZ[2][2],
];

static XYZ_TO_RGB: LazyLock<[[f64; 3]; 3]> = LazyLock::new(|| invert3(&RGB_TO_XYZ));

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let inv_det = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // cofactor expansion; indices (j, i) transpose for the adjugate
            let a = m[(j + 1) % 3][(i + 1) % 3];
            let b = m[(j + 1) % 3][(i + 2) % 3];
            let c = m[(j + 2) % 3][(i + 1) % 3];
            let d = m[(j + 2) % 3][(i + 2) % 3];
            out[i][j] = (a * d - b * c) * inv_det;
        }
    }
    out
}

fn srgb_decompand(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn srgb_compand(v: f64) -> f64 {
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

const LAB_EPS: f64 = 216.0 / 24389.0; // (6/29)^3
const LAB_KAPPA: f64 = 24389.0 / 27.0; // (29/3)^3

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPS {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let f3 = f * f * f;
    if f3 > LAB_EPS {
        f3
    } else {
        (116.0 * f - 16.0) / LAB_KAPPA
    }
}

/// Converts one 8-bit sRGB pixel to raw CIELAB.
pub fn rgb_pixel_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin: Vec<f64> = rgb.iter().map(|&v| srgb_decompand(v / 255.0)).collect();
    let mut xyz = [0.0; 3];
    for (i, row) in RGB_TO_XYZ.iter().enumerate() {
        xyz[i] = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
    }
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Converts one raw CIELAB pixel back to 8-bit sRGB, clamping out-of-gamut
/// values into [0, 255].
pub fn lab_pixel_to_rgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let xyz = [
        lab_f_inv(fx) * WHITE[0],
        lab_f_inv(fy) * WHITE[1],
        lab_f_inv(fz) * WHITE[2],
    ];
    let m = &*XYZ_TO_RGB;
    let mut out = [0.0; 3];
    for (i, row) in m.iter().enumerate() {
        let lin = row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2];
        out[i] = (srgb_compand(lin.clamp(0.0, 1.0)) * 255.0).clamp(0.0, 255.0);
    }
    out
}

fn map_pixels(img: &ImageGrid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Array3<f64> {
    let (h, w, _) = img.pixels().dim();
    let mut out = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let p = f([
                img.pixels()[(y, x, 0)],
                img.pixels()[(y, x, 1)],
                img.pixels()[(y, x, 2)],
            ]);
            for c in 0..3 {
                out[(y, x, c)] = p[c];
            }
        }
    }
    out
}

/// sRGB (8-bit) -> raw CIELAB via gamma decompanding and XYZ under D65.
pub fn rgb_to_lab(img: &ImageGrid) -> Result<ImageGrid> {
    img.expect_space(ColorSpace::Srgb8)?;
    ImageGrid::new(map_pixels(img, rgb_pixel_to_lab), ColorSpace::LabRaw)
}

/// Raw CIELAB -> sRGB (8-bit); the exact inverse of [`rgb_to_lab`] inside
/// the gamut, clamping outside it.
pub fn lab_to_rgb(img: &ImageGrid) -> Result<ImageGrid> {
    img.expect_space(ColorSpace::LabRaw)?;
    ImageGrid::new(map_pixels(img, lab_pixel_to_rgb), ColorSpace::Srgb8)
}

/// Normalization divisors: L' = L/50 - 1, a' = a/110, b' = b/110.
pub const LAB_L_SCALE: f64 = 50.0;
pub const LAB_AB_SCALE: f64 = 110.0;

/// Affine range conversions: LabRaw <-> LabNorm and Srgb8 <-> SrgbUnit.
/// Denormalization is the same operation with the spaces swapped.
pub fn normalize(img: &ImageGrid, target: ColorSpace) -> Result<ImageGrid> {
    let src = img.space();
    let (h, w, c) = img.pixels().dim();
    let mut out = Array3::zeros((h, w, c));
    match (src, target) {
        (ColorSpace::LabRaw, ColorSpace::LabNorm) => {
            for ((y, x, ch), &v) in img.pixels().indexed_iter() {
                out[(y, x, ch)] = if ch == 0 {
                    v / LAB_L_SCALE - 1.0
                } else {
                    v / LAB_AB_SCALE
                };
            }
        }
        (ColorSpace::LabNorm, ColorSpace::LabRaw) => {
            if c != 3 {
                return Err(Error::contract(format!(
                    "denormalizing to LAB_RAW needs 3 channels, got {c}"
                )));
            }
            for ((y, x, ch), &v) in img.pixels().indexed_iter() {
                out[(y, x, ch)] = if ch == 0 {
                    (v + 1.0) * LAB_L_SCALE
                } else {
                    v * LAB_AB_SCALE
                };
            }
        }
        (ColorSpace::Srgb8, ColorSpace::SrgbUnit) => {
            out.assign(img.pixels());
            out.mapv_inplace(|v| v / 255.0);
        }
        (ColorSpace::SrgbUnit, ColorSpace::Srgb8) => {
            out.assign(img.pixels());
            out.mapv_inplace(|v| v * 255.0);
        }
        _ => {
            return Err(Error::contract(format!(
                "unsupported normalization pair {src} -> {target}"
            )))
        }
    }
    ImageGrid::new(out, target)
}

/// Splits a normalized Lab image into the L condition channel and the
/// stacked (a, b) target channels.
pub fn split_lab(img: &ImageGrid) -> Result<(ImageGrid, ImageGrid)> {
    img.expect_space(ColorSpace::LabNorm)?;
    if img.channels() != 3 {
        return Err(Error::contract(format!(
            "split_lab needs a 3-channel LAB_NORM image, got {} channels",
            img.channels()
        )));
    }
    let l = img.pixels().slice(ndarray::s![.., .., 0..1]).to_owned();
    let ab = img.pixels().slice(ndarray::s![.., .., 1..3]).to_owned();
    Ok((
        ImageGrid::new(l, ColorSpace::LabNorm)?,
        ImageGrid::new(ab, ColorSpace::LabNorm)?,
    ))
}

/// Inverse of [`split_lab`].
pub fn merge_lab(l: &ImageGrid, ab: &ImageGrid) -> Result<ImageGrid> {
    l.expect_space(ColorSpace::LabNorm)?;
    ab.expect_space(ColorSpace::LabNorm)?;
    if l.channels() != 1 || ab.channels() != 2 {
        return Err(Error::contract(format!(
            "merge_lab expects 1+2 channels, got {}+{}",
            l.channels(),
            ab.channels()
        )));
    }
    if l.height() != ab.height() || l.width() != ab.width() {
        return Err(Error::shape(
            format!("{}x{}", l.height(), l.width()),
            format!("{}x{}", ab.height(), ab.width()),
        ));
    }
    let (h, w, _) = l.pixels().dim();
    let mut out = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            out[(y, x, 0)] = l.pixels()[(y, x, 0)];
            out[(y, x, 1)] = ab.pixels()[(y, x, 0)];
            out[(y, x, 2)] = ab.pixels()[(y, x, 1)];
        }
    }
    ImageGrid::new(out, ColorSpace::LabNorm)
}

/// Unit sRGB -> single-channel luma with BT.601 weights.
pub fn rgb_to_gray(img: &ImageGrid) -> Result<ImageGrid> {
    img.expect_space(ColorSpace::SrgbUnit)?;
    let (h, w, _) = img.pixels().dim();
    let mut out = Array3::zeros((h, w, 1));
    for y in 0..h {
        for x in 0..w {
            out[(y, x, 0)] = 0.299 * img.pixels()[(y, x, 0)]
                + 0.587 * img.pixels()[(y, x, 1)]
                + 0.114 * img.pixels()[(y, x, 2)];
        }
    }
    ImageGrid::new(out, ColorSpace::GrayUnit)
}
