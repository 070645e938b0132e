use super::PixelCoord;
use crate::raster::{DepthMap, ImageBuffer};

/// The 2×2 pixel neighbourhood supporting a bilinear lookup.
///
/// Coordinates on the last row/column reuse the cell to their left/above with
/// a unit fraction, so every in-bounds integer coordinate is sampleable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearCell {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub fx: f64,
    pub fy: f64,
}

/// Interpolated value with its derivatives along `u` and `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub du: f64,
    pub dv: f64,
}

#[inline]
fn locate_axis(x: f64, len: usize) -> Option<(usize, usize, f64)> {
    if !(x >= 0.0 && x <= (len - 1) as f64) {
        return None;
    }
    if len == 1 {
        return Some((0, 0, 0.0));
    }
    let mut i0 = x.floor() as usize;
    if i0 >= len - 1 {
        i0 = len - 2;
    }
    Some((i0, i0 + 1, x - i0 as f64))
}

impl BilinearCell {
    /// `None` when any support pixel would fall outside `[0, w-1] × [0, h-1]`.
    #[inline]
    pub fn locate(width: usize, height: usize, u: f64, v: f64) -> Option<Self> {
        let (x0, x1, fx) = locate_axis(u, width)?;
        let (y0, y1, fy) = locate_axis(v, height)?;
        Some(Self {
            x0,
            y0,
            x1,
            y1,
            fx,
            fy,
        })
    }

    #[inline]
    pub fn corners(&self) -> [(usize, usize, f64); 4] {
        let (fx, fy) = (self.fx, self.fy);
        [
            (self.x0, self.y0, (1.0 - fx) * (1.0 - fy)),
            (self.x1, self.y0, fx * (1.0 - fy)),
            (self.x0, self.y1, (1.0 - fx) * fy),
            (self.x1, self.y1, fx * fy),
        ]
    }

    #[inline]
    pub fn interpolate(&self, fetch: impl Fn(usize, usize) -> f64) -> Sample {
        let v00 = fetch(self.x0, self.y0);
        let v10 = fetch(self.x1, self.y0);
        let v01 = fetch(self.x0, self.y1);
        let v11 = fetch(self.x1, self.y1);
        let (fx, fy) = (self.fx, self.fy);
        let top = v00 + fx * (v10 - v00);
        let bottom = v01 + fx * (v11 - v01);
        Sample {
            value: top + fy * (bottom - top),
            du: (1.0 - fy) * (v10 - v00) + fy * (v11 - v01),
            dv: bottom - top,
        }
    }
}

/// Bilinear depth lookup; `None` if any support pixel is out of bounds or
/// masked invalid.
pub fn sample_depth(map: &DepthMap, p: PixelCoord) -> Option<Sample> {
    let cell = BilinearCell::locate(map.width(), map.height(), p.u, p.v)?;
    let all_valid = cell
        .corners()
        .iter()
        .all(|&(x, y, _)| map.is_valid(x, y));
    if !all_valid {
        return None;
    }
    Some(cell.interpolate(|x, y| map.get(x, y)))
}

/// Bilinear lookup of one image channel; `None` when out of support.
pub fn sample_image(img: &ImageBuffer, p: PixelCoord, channel: usize) -> Option<Sample> {
    let cell = BilinearCell::locate(img.width(), img.height(), p.u, p.v)?;
    Some(cell.interpolate(|x, y| img.get(x, y, channel)))
}
