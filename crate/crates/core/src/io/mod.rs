//! File formats: PFM depth, PLY clouds, TUM-style trajectories, 8-bit images.

mod pfm;
mod ply;
mod tum;

pub use pfm::{read_pfm, read_pfm_depth, write_pfm, write_pfm_depth};
pub use ply::{read_ply, write_ply};
pub use tum::{format_significant, read_trajectory, write_trajectory};

use std::path::Path;

use crate::error::{ReconError, Result};
use crate::raster::ImageBuffer;

/// Reads a PNG or PPM as RGB in `[0, 1]`.
pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path).map_err(|e| ReconError::format(path, e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.as_raw().iter().map(|v| *v as f64 / 255.0).collect();
    ImageBuffer::new(w as usize, h as usize, 3, data)
}

/// Writes an 8-bit PNG (or PPM by extension), rounding to the nearest level.
pub fn write_image(path: &Path, img: &ImageBuffer) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let to_u8 = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    let result = if img.channels() == 3 {
        let raw = img.data().iter().map(|v| to_u8(*v)).collect();
        image::RgbImage::from_raw(w, h, raw)
            .expect("buffer length matches dimensions")
            .save(path)
    } else {
        let raw = img.data().iter().map(|v| to_u8(*v)).collect();
        image::GrayImage::from_raw(w, h, raw)
            .expect("buffer length matches dimensions")
            .save(path)
    };
    result.map_err(|e| ReconError::format(path, e.to_string()))
}

/// Reads a sky mask image: nonzero pixels are sky. Returns per-pixel
/// "keep" flags, i.e. `true` where the pixel is not sky.
pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let img = image::open(path).map_err(|e| ReconError::format(path, e.to_string()))?;
    let g = img.to_luma8();
    let (w, h) = g.dimensions();
    Ok((w as usize, h as usize, g.as_raw().iter().map(|v| *v == 0).collect()))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| ReconError::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| ReconError::io(path, e))
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| ReconError::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f64> = (0..4 * 3 * 3).map(|i| (i * 7 % 256) as f64 / 255.0).collect();
        let img = ImageBuffer::new(4, 3, 3, data).unwrap();
        for name in ["a.png", "a.ppm"] {
            let p = dir.path().join(name);
            write_image(&p, &img).unwrap();
            let back = read_image(&p).unwrap();
            assert_eq!(back, img);
        }
    }

    #[test]
    fn mask_semantics() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        image::GrayImage::from_raw(2, 1, vec![0, 255]).unwrap().save(&p).unwrap();
        let (w, h, keep) = read_mask(&p).unwrap();
        assert_eq!((w, h, keep), (2, 1, vec![true, false]));
    }
}
