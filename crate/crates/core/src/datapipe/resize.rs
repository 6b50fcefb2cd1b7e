//! Bicubic resampling (Keys kernel, a = -0.5), separable, with the kernel
//! support widened by the scale factor when shrinking so decimation is
//! antialiased. Weights are renormalized after edge clamping, so constant
//! images are preserved exactly.

use ndarray::Array3;

use crate::colorspace::{ColorSpace, ImageGrid};
use crate::error::{Error, Result};

/// Keys cubic convolution kernel with a = -0.5.
pub fn cubic_kernel(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t * t * t - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Sample positions and normalized weights for one output index.
fn taps(out_i: usize, n_in: usize, n_out: usize) -> (isize, Vec<f64>) {
    let scale = n_in as f64 / n_out as f64;
    let filter_scale = scale.max(1.0);
    let support = 2.0 * filter_scale;
    let center = (out_i as f64 + 0.5) * scale - 0.5;
    let lo = (center - support).ceil() as isize;
    let hi = (center + support).floor() as isize;
    let mut weights: Vec<f64> = (lo..=hi)
        .map(|j| cubic_kernel((j as f64 - center) / filter_scale))
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    (lo, weights)
}

fn clamp_index(j: isize, n: usize) -> usize {
    j.clamp(0, n as isize - 1) as usize
}

/// Resizes an H x W x C array to the requested dimensions. Values are the
/// raw filtered results (callers clamp into their space's range).
pub fn resize_bicubic(data: &Array3<f64>, out_h: usize, out_w: usize) -> Array3<f64> {
    let (h, w, c) = data.dim();
    assert!(out_h > 0 && out_w > 0, "target dims must be positive");

    // horizontal pass
    let mut mid = Array3::<f64>::zeros((h, out_w, c));
    let col_taps: Vec<(isize, Vec<f64>)> = (0..out_w).map(|i| taps(i, w, out_w)).collect();
    for y in 0..h {
        for (x_out, (lo, weights)) in col_taps.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, wt) in weights.iter().enumerate() {
                    let xj = clamp_index(lo + k as isize, w);
                    acc += wt * data[(y, xj, ch)];
                }
                mid[(y, x_out, ch)] = acc;
            }
        }
    }

    // vertical pass
    let mut out = Array3::<f64>::zeros((out_h, out_w, c));
    let row_taps: Vec<(isize, Vec<f64>)> = (0..out_h).map(|i| taps(i, h, out_h)).collect();
    for (y_out, (lo, weights)) in row_taps.iter().enumerate() {
        for x in 0..out_w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, wt) in weights.iter().enumerate() {
                    let yj = clamp_index(lo + k as isize, h);
                    acc += wt * mid[(yj, x, ch)];
                }
                out[(y_out, x, ch)] = acc;
            }
        }
    }
    out
}

/// Resizes the shorter side to `side` (aspect preserved) then center-crops
/// to side x side.
pub fn standardize_image(raw: &ImageGrid, side: usize) -> Result<ImageGrid> {
    raw.expect_space(ColorSpace::Srgb8)?;
    let (h, w) = (raw.height(), raw.width());
    if h < 16 || w < 16 {
        return Err(Error::contract(format!(
            "standardize_image needs dims of at least 16, got {h}x{w}"
        )));
    }
    if side == 0 {
        return Err(Error::contract("side must be positive"));
    }
    let resized = resize_shorter_side(raw, side);
    let (rh, rw, _) = resized.dim();
    let y0 = (rh - side) / 2;
    let x0 = (rw - side) / 2;
    let crop = resized
        .slice(ndarray::s![y0..y0 + side, x0..x0 + side, ..])
        .to_owned();
    ImageGrid::new(crop, ColorSpace::Srgb8)
}

/// Aspect-preserving resize so the shorter side equals `side`.
pub(crate) fn resize_shorter_side(raw: &ImageGrid, side: usize) -> Array3<f64> {
    let (h, w) = (raw.height(), raw.width());
    let (new_h, new_w) = if h <= w {
        let nw = ((w as f64 * side as f64 / h as f64).round() as usize).max(side);
        (side, nw)
    } else {
        let nh = ((h as f64 * side as f64 / w as f64).round() as usize).max(side);
        (nh, side)
    };
    if (new_h, new_w) == (h, w) {
        raw.pixels().clone()
    } else {
        resize_bicubic(raw.pixels(), new_h, new_w)
    }
}

/// Bicubic decimation by an integer factor; output clamped into [0, 1].
pub fn downsample_bicubic(hr: &ImageGrid, scale: usize) -> Result<ImageGrid> {
    hr.expect_space(ColorSpace::SrgbUnit)?;
    if scale == 0 {
        return Err(Error::contract("scale must be positive"));
    }
    let (h, w) = (hr.height(), hr.width());
    if h % scale != 0 || w % scale != 0 {
        return Err(Error::contract(format!(
            "dims {h}x{w} are not divisible by scale {scale}"
        )));
    }
    let out = resize_bicubic(hr.pixels(), h / scale, w / scale);
    ImageGrid::new(out, ColorSpace::SrgbUnit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    /// Independent reference: direct 2-D evaluation of the same kernel
    /// definition, no separable passes, written without reference to the
    /// production code path.
    fn reference_bicubic(data: &Array3<f64>, out_h: usize, out_w: usize) -> Array3<f64> {
        let (h, w, c) = data.dim();
        let mut out = Array3::<f64>::zeros((out_h, out_w, c));
        let sy = h as f64 / out_h as f64;
        let sx = w as f64 / out_w as f64;
        let fy = sy.max(1.0);
        let fx = sx.max(1.0);
        for oy in 0..out_h {
            let cy = (oy as f64 + 0.5) * sy - 0.5;
            let ylo = (cy - 2.0 * fy).ceil() as isize;
            let yhi = (cy + 2.0 * fy).floor() as isize;
            for ox in 0..out_w {
                let cx = (ox as f64 + 0.5) * sx - 0.5;
                let xlo = (cx - 2.0 * fx).ceil() as isize;
                let xhi = (cx + 2.0 * fx).floor() as isize;
                for ch in 0..c {
                    let mut acc = 0.0;
                    let mut wsum = 0.0;
                    for jy in ylo..=yhi {
                        let wy = cubic_kernel((jy as f64 - cy) / fy);
                        let yy = jy.clamp(0, h as isize - 1) as usize;
                        for jx in xlo..=xhi {
                            let wx = cubic_kernel((jx as f64 - cx) / fx);
                            let xx = jx.clamp(0, w as isize - 1) as usize;
                            acc += wy * wx * data[(yy, xx, ch)];
                            wsum += wy * wx;
                        }
                    }
                    out[(oy, ox, ch)] = acc / wsum;
                }
            }
        }
        out
    }

    fn checkerboard(h: usize, w: usize, period: usize) -> Array3<f64> {
        Array3::from_shape_fn((h, w, 1), |(y, x, _)| {
            if (y / period + x / period) % 2 == 0 {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn checkerboard_scale2_matches_reference_kernel() {
        let board = checkerboard(16, 16, 2);
        let got = resize_bicubic(&board, 8, 8);
        let want = reference_bicubic(&board, 8, 8);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn random_resizes_match_reference_kernel() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(41);
        let data = Array3::from_shape_fn((13, 19, 3), |_| rng.random::<f64>());
        for &(oh, ow) in &[(7, 9), (26, 38), (13, 19), (5, 40)] {
            let got = resize_bicubic(&data, oh, ow);
            let want = reference_bicubic(&data, oh, ow);
            for (a, b) in got.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-6, "({oh},{ow}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn constants_survive_any_resize() {
        let c = Array3::from_elem((30, 50, 3), 0.37);
        for &(oh, ow) in &[(10, 10), (64, 64), (17, 3)] {
            let out = resize_bicubic(&c, oh, ow);
            for v in out.iter() {
                assert!((v - 0.37).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn standardize_identity_at_target_size() {
        let img = ImageGrid::constant(256, 256, ColorSpace::Srgb8, &[10.0, 20.0, 30.0]).unwrap();
        let out = standardize_image(&img, 256).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn standardize_wide_image_takes_center() {
        // left half black, right half white, 512x256
        let data = Array3::from_shape_fn((256, 512, 3), |(_, x, _)| {
            if x < 256 {
                0.0
            } else {
                255.0
            }
        });
        let img = ImageGrid::new(data, ColorSpace::Srgb8).unwrap();
        let out = standardize_image(&img, 256).unwrap();
        assert_eq!((out.height(), out.width()), (256, 256));
        // horizontally centered half: left part black, right part white
        assert_eq!(out.pixels()[(0, 0, 0)], 0.0);
        assert_eq!(out.pixels()[(0, 255, 0)], 255.0);
    }

    #[test]
    fn standardize_constant_tall_image() {
        let img = ImageGrid::constant(1000, 300, ColorSpace::Srgb8, &[42.0, 7.0, 99.0]).unwrap();
        let out = standardize_image(&img, 256).unwrap();
        assert_eq!((out.height(), out.width()), (256, 256));
        for ((_, _, c), v) in out.pixels().indexed_iter() {
            let want = [42.0, 7.0, 99.0][c];
            assert!((v - want).abs() < 1e-9);
        }
    }

    #[test]
    fn standardize_output_is_always_square() {
        for &(h, w) in &[(17, 301), (999, 1001), (256, 257), (16, 16), (300, 16)] {
            let img = ImageGrid::constant(h, w, ColorSpace::Srgb8, &[1.0, 2.0, 3.0]).unwrap();
            let out = standardize_image(&img, 64).unwrap();
            assert_eq!((out.height(), out.width()), (64, 64), "input {h}x{w}");
        }
    }

    #[test]
    fn standardize_rejects_tiny_inputs() {
        let img = ImageGrid::constant(8, 100, ColorSpace::Srgb8, &[0.0; 3]).unwrap();
        assert!(standardize_image(&img, 256).is_err());
    }

    #[test]
    fn downsample_shape_and_constants() {
        let img = ImageGrid::constant(256, 256, ColorSpace::SrgbUnit, &[0.5, 0.25, 0.75]).unwrap();
        let lr = downsample_bicubic(&img, 4).unwrap();
        assert_eq!((lr.height(), lr.width()), (64, 64));
        for ((_, _, c), v) in lr.pixels().indexed_iter() {
            let want = [0.5, 0.25, 0.75][c];
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn downsample_rejects_indivisible() {
        let img = ImageGrid::constant(10, 10, ColorSpace::SrgbUnit, &[0.5; 3]).unwrap();
        assert!(downsample_bicubic(&img, 4).is_err());
    }
}
