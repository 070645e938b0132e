//! Photometric, geometric and anchor-regularization terms of the objective.

use serde::{Deserialize, Serialize};

use crate::error::{ReconError, Result};
use crate::geometry::{
    sample_depth, sample_image, warp_point, Intrinsics, PixelCoord, PoseMatrix, Warp,
};
use crate::raster::{DepthMap, ImageBuffer, EPS_DEPTH};

/// Pixels of frame `i` that survive the warp into frame `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidSet {
    pub width: usize,
    pub height: usize,
    pub flags: Vec<bool>,
}

impl ValidSet {
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }
}

/// One keyframe pair's warp: per-pixel warped coordinates and depths plus
/// the valid set.
#[derive(Debug, Clone)]
pub struct PairWarp {
    pub warps: Vec<Warp>,
    pub valid: ValidSet,
}

/// Warps every pixel of `depth_i` into frame `j` and determines the valid set:
/// source depth valid, warp valid, target depth sampleable, not sky-masked
/// (sky pixels of `j` are expected to be masked out of `depth_j` already).
pub fn warp_pair(
    depth_i: &DepthMap,
    depth_j: &DepthMap,
    intr: &Intrinsics,
    pose_i: &PoseMatrix,
    pose_j: &PoseMatrix,
    sky_i: Option<&[bool]>,
) -> PairWarp {
    let (w, h) = (depth_i.width(), depth_i.height());
    let mut warps = Vec::with_capacity(w * h);
    let mut flags = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = PixelCoord::new(x as f64, y as f64);
            let warp = warp_point(p, depth_i.get(x, y), intr, pose_i, pose_j);
            let eligible = depth_i.is_valid(x, y) && sky_i.is_none_or(|m| m[y * w + x]);
            let ok = eligible
                && warp.valid
                && sample_depth(depth_j, warp.coord)
                    .is_some_and(|s| s.value + warp.depth >= 2.0 * EPS_DEPTH);
            warps.push(warp);
            flags.push(ok);
        }
    }
    PairWarp {
        warps,
        valid: ValidSet {
            width: w,
            height: h,
            flags,
        },
    }
}

/// A per-pair loss value; `no_overlap` marks pairs whose valid set is empty
/// (they contribute zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLoss {
    pub value: f64,
    pub no_overlap: bool,
}

impl PairLoss {
    fn empty() -> Self {
        Self {
            value: 0.0,
            no_overlap: true,
        }
    }
}

/// Mean over the valid set of the channel-averaged absolute color difference
/// `|I_i(p) − I_j(p_{i→j})|`, with bilinear lookup in `I_j`.
pub fn photometric_loss(
    img_i: &ImageBuffer,
    img_j: &ImageBuffer,
    warped: &[PixelCoord],
    valid: &ValidSet,
) -> Result<PairLoss> {
    if img_i.channels() != img_j.channels() {
        return Err(ReconError::invalid("paired images differ in channel count"));
    }
    if warped.len() != valid.flags.len() {
        return Err(ReconError::invalid("one warped coordinate per pixel is required"));
    }
    let channels = img_i.channels();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (idx, (&ok, &q)) in valid.flags.iter().zip(warped).enumerate() {
        if !ok {
            continue;
        }
        let (x, y) = (idx % valid.width, idx / valid.width);
        let mut diff = 0.0;
        for c in 0..channels {
            let Some(s) = sample_image(img_j, q, c) else {
                return Err(ReconError::invalid("valid pixel warped outside target image"));
            };
            diff += (img_i.get(x, y, c) - s.value).abs();
        }
        sum += diff / channels as f64;
        n += 1;
    }
    if n == 0 {
        return Ok(PairLoss::empty());
    }
    Ok(PairLoss {
        value: sum / n as f64,
        no_overlap: false,
    })
}

/// Mean over the valid set of `|D_j(p') − d'| / (D_j(p') + d')` where `d'` is
/// the warped depth and `D_j(p')` the bilinear target depth.
pub fn geometric_loss(
    depth_j: &DepthMap,
    warped_depth: &[f64],
    warped: &[PixelCoord],
    valid: &ValidSet,
) -> Result<PairLoss> {
    if warped.len() != valid.flags.len() || warped_depth.len() != valid.flags.len() {
        return Err(ReconError::invalid("one warped sample per pixel is required"));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((&ok, &q), &dw) in valid.flags.iter().zip(warped).zip(warped_depth) {
        if !ok {
            continue;
        }
        let Some(s) = sample_depth(depth_j, q) else {
            return Err(ReconError::invalid("valid pixel has no target depth"));
        };
        let den = s.value + dw;
        if den < 2.0 * EPS_DEPTH {
            continue;
        }
        sum += (s.value - dw).abs() / den;
        n += 1;
    }
    if n == 0 {
        return Ok(PairLoss::empty());
    }
    Ok(PairLoss {
        value: sum / n as f64,
        no_overlap: false,
    })
}

/// `Σ_i Σ_t |1 − ω_{i,t}|` over all frames.
pub fn regularization_loss<S: AsRef<[f64]>>(omegas: &[S]) -> f64 {
    omegas
        .iter()
        .flat_map(|o| o.as_ref().iter())
        .map(|w| (1.0 - w).abs())
        .sum()
}

/// Balancing weights of the three terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub pc: f64,
    pub gc: f64,
    pub regu: f64,
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        pc: 0.0,
        gc: 0.0,
        regu: 0.0,
    };

    pub fn new(pc: f64, gc: f64, regu: f64) -> Result<Self> {
        if [pc, gc, regu].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(ReconError::invalid("loss weights must be non-negative"));
        }
        Ok(Self { pc, gc, regu })
    }

    pub fn scaled(self, k: f64) -> Self {
        Self {
            pc: self.pc * k,
            gc: self.gc * k,
            regu: self.regu * k,
        }
    }
}

/// Values of the three terms and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pc: f64,
    pub gc: f64,
    pub regu: f64,
    pub total: f64,
}

/// Weighted sum of the three terms.
pub fn total_loss(pc: f64, gc: f64, regu: f64, w: &LossWeights) -> LossBreakdown {
    LossBreakdown {
        pc,
        gc,
        regu,
        total: w.pc * pc + w.gc * gc + w.regu * regu,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::DepthStage;

    fn identity_pair(w: usize, h: usize) -> (Vec<PixelCoord>, ValidSet) {
        let coords = (0..w * h)
            .map(|i| PixelCoord::new((i % w) as f64, (i / w) as f64))
            .collect();
        let valid = ValidSet {
            width: w,
            height: h,
            flags: vec![true; w * h],
        };
        (coords, valid)
    }

    #[test]
    fn photometric_examples() {
        let img = ImageBuffer::new(3, 2, 1, vec![0.1, 0.5, 0.2, 0.9, 0.3, 0.4]).unwrap();
        let (coords, valid) = identity_pair(3, 2);
        assert_eq!(photometric_loss(&img, &img, &coords, &valid).unwrap().value, 0.0);

        let a = ImageBuffer::filled(3, 2, 3, 0.3).unwrap();
        let b = ImageBuffer::filled(3, 2, 3, 0.4).unwrap();
        let l = photometric_loss(&a, &b, &coords, &valid).unwrap();
        assert!((l.value - 0.1).abs() < 1e-12);

        let none = ValidSet {
            flags: vec![false; 6],
            ..valid
        };
        let l = photometric_loss(&a, &b, &coords, &none).unwrap();
        assert_eq!(l, PairLoss::empty());
    }

    #[test]
    fn geometric_examples() {
        let dj = DepthMap::new(1, 1, vec![3.0], DepthStage::ScaleConsistent).unwrap();
        let (coords, valid) = identity_pair(1, 1);
        let l = geometric_loss(&dj, &[1.0], &coords, &valid).unwrap();
        assert_eq!(l.value, 0.5);
        let consistent = geometric_loss(&dj, &[3.0], &coords, &valid).unwrap();
        assert_eq!(consistent.value, 0.0);
        let dj1 = DepthMap::new(1, 1, vec![1.0], DepthStage::ScaleConsistent).unwrap();
        let swapped = geometric_loss(&dj1, &[3.0], &coords, &valid).unwrap();
        assert_eq!(swapped.value, l.value);
    }

    #[test]
    fn regularization_examples() {
        assert_eq!(regularization_loss(&[vec![1.0; 25]]), 0.0);
        assert_eq!(regularization_loss(&[vec![1.5; 25]]), 12.5);
        assert_eq!(regularization_loss(&[vec![0.5; 25]]), 12.5);
    }

    #[test]
    fn weighted_total() {
        assert_eq!(total_loss(0.3, 0.2, 5.0, &LossWeights::ZERO).total, 0.0);
        let w = LossWeights::new(2.0, 0.5, 0.01).unwrap();
        let t = total_loss(0.1, 0.2, 1.0, &w);
        assert!((t.total - 0.31).abs() < 1e-15);
        let t2 = total_loss(0.1, 0.2, 1.0, &w.scaled(2.0));
        assert!((t2.total - 2.0 * t.total).abs() < 1e-15);
    }

    #[test]
    fn sky_mask_shrinks_valid_set() {
        let d = DepthMap::new(4, 3, vec![2.0; 12], DepthStage::ScaleConsistent).unwrap();
        let intr = Intrinsics::new(1.0, 4.8, 4, 3).unwrap();
        let p = PoseMatrix::identity();
        let mut sky = vec![true; 12];
        sky[0] = false;
        sky[5] = false;
        let pw = warp_pair(&d, &d, &intr, &p, &p, Some(&sky));
        assert_eq!(pw.valid.count(), 10);
        let img = ImageBuffer::filled(4, 3, 3, 0.5).unwrap();
        let coords: Vec<PixelCoord> = pw.warps.iter().map(|w| w.coord).collect();
        let depths: Vec<f64> = pw.warps.iter().map(|w| w.depth).collect();
        let pc = photometric_loss(&img, &img, &coords, &pw.valid).unwrap();
        let gc = geometric_loss(&d, &depths, &coords, &pw.valid).unwrap();
        assert!(pc.value.is_finite() && gc.value.is_finite());
        assert_eq!((pc.value, gc.value), (0.0, 0.0));
    }
}
