//! PNG reading and writing for masks, targets and triptychs.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb, RgbImage};

use morphopc::BinaryGrid;

use crate::Failure;

fn image_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("image {}: {e}", path.display()))
}

/// 16-bit levels of a `[0, 1]` plane.
pub fn quantize(plane: &[f32]) -> Vec<u16> {
    plane
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16)
        .collect()
}

/// Binarization of the stored 16-bit mask at 0.5, ties going to 1.
pub fn threshold_levels(levels: &[u16]) -> Vec<bool> {
    levels.iter().map(|&q| q as f64 / 65535.0 >= 0.5).collect()
}

pub fn save_levels(path: &Path, h: usize, w: usize, levels: Vec<u16>) -> Result<(), Failure> {
    ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(w as u32, h as u32, levels)
        .expect("buffer size")
        .save(path)
        .map_err(|e| image_err(path, e))
}

pub fn save_binary(path: &Path, h: usize, w: usize, bits: &[bool]) -> Result<(), Failure> {
    let px = bits.iter().map(|&b| if b { 255u8 } else { 0 }).collect();
    ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(w as u32, h as u32, px)
        .expect("buffer size")
        .save(path)
        .map_err(|e| image_err(path, e))
}

/// Any grey PNG thresholded at half scale.
pub fn read_binary(path: &Path) -> Result<BinaryGrid, Failure> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let bits = img.as_raw().iter().map(|&v| v >= 32768).collect();
    BinaryGrid::from_vec(h, w, bits).map_err(Failure::from)
}

/// Target, continuous mask and printed image side by side with a 2 px
/// gutter.
pub fn triptych(target: &BinaryGrid, mask: &[f32], printed: &BinaryGrid) -> RgbImage {
    let (h, w) = (target.height(), target.width());
    let gap = 2;
    let mut img = RgbImage::from_pixel((3 * w + 2 * gap) as u32, h as u32, Rgb([64, 64, 64]));
    let bit = |b: bool| if b { 255u8 } else { 0 };
    for y in 0..h {
        for x in 0..w {
            let t = bit(target.get(y, x));
            let m = (mask[y * w + x].clamp(0.0, 1.0) * 255.0).round() as u8;
            let p = bit(printed.get(y, x));
            img.put_pixel(x as u32, y as u32, Rgb([t; 3]));
            img.put_pixel((w + gap + x) as u32, y as u32, Rgb([m; 3]));
            img.put_pixel((2 * (w + gap) + x) as u32, y as u32, Rgb([p; 3]));
        }
    }
    img
}

pub fn save_rgb(path: &Path, img: &RgbImage) -> Result<(), Failure> {
    img.save(path).map_err(|e| image_err(path, e))
}
