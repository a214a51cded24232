//! 8-bit PNG images for viewing, and tool masks.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::eval::min_max_normalize;
use crate::imaging::{Image, Mask};
use crate::math::Real;

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 3-channel image in `[0, 1]` as RGB8, clamping out-of-range values.
pub fn write_png_rgb<T: Real>(path: &Path, img: &Image<T>) -> Result<()> {
    if img.channels != 3 {
        return Err(Error::Shape(format!("RGB PNG needs 3 channels, got {}", img.channels)));
    }
    let buf: RgbImage = ImageBuffer::from_fn(img.width as u32, img.height as u32, |x, y| {
        let i = img.index(x as usize, y as usize, 0);
        Rgb([to_u8(img.data[i].as_f64()), to_u8(img.data[i + 1].as_f64()), to_u8(img.data[i + 2].as_f64())])
    });
    buf.save(path).map_err(Error::from)
}

/// Writes a single-channel map min-max normalized to gray.
pub fn write_png_depth<T: Real>(path: &Path, depth: &Image<T>) -> Result<()> {
    let n = min_max_normalize(depth);
    let buf: GrayImage = ImageBuffer::from_fn(n.width as u32, n.height as u32, |x, y| {
        Luma([to_u8(n.data[y as usize * n.width + x as usize])])
    });
    buf.save(path).map_err(Error::from)
}

/// Tool pixels are white.
pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    let buf: GrayImage = ImageBuffer::from_fn(mask.width as u32, mask.height as u32, |x, y| {
        Luma([if mask.is_tool(x as usize, y as usize) { 255 } else { 0 }])
    });
    buf.save(path).map_err(Error::from)
}

/// Any pixel with luma above half intensity marks a tool.
pub fn read_mask_png(path: &Path) -> Result<Mask> {
    if !path.is_file() {
        return Err(Error::MissingFile { path: path.to_path_buf() });
    }
    let img = image::open(path)?.to_luma8();
    Ok(Mask {
        width: img.width() as usize,
        height: img.height() as usize,
        data: img.pixels().map(|p| p.0[0] > 127).collect(),
    })
}
