//! Red/green rendering of morphological delta maps.
//!
//! Zero renders mid grey. Positive deltas (expansion) push toward green,
//! negative ones (contraction) toward red, each scaled by the image's own
//! largest magnitude, which is recorded in a sidecar text file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub const MID: u8 = 128;

/// Colour for `value` after dividing by `scale` (> 0).
pub fn delta_color(value: f64, scale: f64) -> [u8; 3] {
    if scale <= 0.0 || value == 0.0 {
        return [MID; 3];
    }
    let v = (value.abs() / scale).min(1.0);
    let strong = (MID as f64 + 127.0 * v).round() as u8;
    let weak = (MID as f64 * (1.0 - v)).round() as u8;
    if value > 0.0 {
        [weak, strong, weak]
    } else {
        [strong, weak, weak]
    }
}

pub fn render_plane<T: Real>(plane: &[T], h: usize, w: usize) -> (RgbImage, f64) {
    let scale = plane.iter().map(|v| v.f64().abs()).fold(0.0, f64::max);
    let img = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Rgb(delta_color(plane[y as usize * w + x as usize].f64(), scale))
    });
    (img, scale)
}

/// Tiles planes into a near-square grid with a 1 px grey gutter.
pub fn render_grid<T: Real>(delta: &Tensor<T>, batch: usize) -> RgbImage {
    let s = delta.shape();
    let cols = (s.c as f64).sqrt().ceil() as usize;
    let rows = s.c.div_ceil(cols);
    let gw = cols * (s.w + 1) + 1;
    let gh = rows * (s.h + 1) + 1;
    let mut grid = RgbImage::from_pixel(gw as u32, gh as u32, Rgb([64, 64, 64]));
    for c in 0..s.c {
        let (img, _) = render_plane(delta.plane(batch, c), s.h, s.w);
        let ox = (c % cols) * (s.w + 1) + 1;
        let oy = (c / cols) * (s.h + 1) + 1;
        for (x, y, p) in img.enumerate_pixels() {
            grid.put_pixel(ox as u32 + x, oy as u32 + y, *p);
        }
    }
    grid
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Writes `<prefix>_c<NN>.png` per channel of batch item `batch`, a
/// `<prefix>_grid.png` overview, and `<prefix>.scale.txt` with one
/// `channel=scale` line per channel.
pub fn export_delta_maps<T: Real>(
    delta: &Tensor<T>,
    batch: usize,
    dir: &Path,
    prefix: &str,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let s = delta.shape();
    let mut written = Vec::with_capacity(s.c + 2);
    let mut sidecar = String::new();
    for c in 0..s.c {
        let (img, scale) = render_plane(delta.plane(batch, c), s.h, s.w);
        let path = dir.join(format!("{prefix}_c{c:02}.png"));
        save(&img, &path)?;
        written.push(path);
        writeln!(sidecar, "{c}={scale:e}").unwrap();
    }
    let grid = dir.join(format!("{prefix}_grid.png"));
    save(&render_grid(delta, batch), &grid)?;
    written.push(grid);
    let side = dir.join(format!("{prefix}.scale.txt"));
    fs::write(&side, sidecar).map_err(|e| Error::io(&side, e))?;
    written.push(side);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_maps_to_hue() {
        assert_eq!(delta_color(0.0, 1.0), [MID; 3]);
        let [r, g, _] = delta_color(0.5, 1.0);
        assert!(g > r);
        let [r, g, _] = delta_color(-0.5, 1.0);
        assert!(r > g);
        assert_eq!(delta_color(1.0, 1.0), [0, 255, 0]);
        assert_eq!(delta_color(-1.0, 1.0), [255, 0, 0]);
    }
}
