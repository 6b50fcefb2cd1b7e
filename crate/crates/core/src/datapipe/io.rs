//! Image file IO: PNG/JPEG decode to 8-bit sRGB grids, PNG encode.

use std::path::Path;

use ndarray::Array3;

use crate::colorspace::{ColorSpace, ImageGrid};
use crate::error::{Error, Result};

/// Decodes a PNG or JPEG into an 8-bit sRGB grid (alpha dropped,
/// grayscale expanded to three channels).
pub fn read_image(path: &Path) -> Result<ImageGrid> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = Array3::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
        img.get_pixel(x as u32, y as u32).0[c] as f64
    });
    ImageGrid::new(data, ColorSpace::Srgb8)
}

/// Encodes an 8-bit sRGB grid as PNG (values rounded to the nearest step).
pub fn write_png(img: &ImageGrid, path: &Path) -> Result<()> {
    img.expect_space(ColorSpace::Srgb8)?;
    if img.channels() != 3 {
        return Err(Error::contract(format!(
            "PNG writer expects 3 channels, got {}",
            img.channels()
        )));
    }
    let (h, w) = (img.height(), img.width());
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                img.pixels()[(y, x, 0)].round().clamp(0.0, 255.0) as u8,
                img.pixels()[(y, x, 1)].round().clamp(0.0, 255.0) as u8,
                img.pixels()[(y, x, 2)].round().clamp(0.0, 255.0) as u8,
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn png_roundtrip_is_exact_for_integer_grids() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.png");
        let data = Array3::from_shape_fn((9, 13, 3), |(y, x, c)| ((y * 31 + x * 7 + c * 3) % 256) as f64);
        let img = ImageGrid::new(data, ColorSpace::Srgb8).unwrap();
        write_png(&img, &path).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(img, back);
    }
}
