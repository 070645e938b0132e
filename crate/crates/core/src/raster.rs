//! Dense per-pixel buffers: color images and depth maps.

use serde::{Deserialize, Serialize};

use crate::error::{ReconError, Result};

/// Depths at or below this value are treated as degenerate (behind the
/// camera or collapsed onto it).
pub const EPS_DEPTH: f64 = 1e-6;

/// Row-major, channel-interleaved image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ReconError::invalid("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(ReconError::invalid(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(ReconError::invalid(format!(
                "expected {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ReconError::invalid(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Luma (Rec. 601) of one pixel; the identity for single-channel images.
    pub fn luma(&self, x: usize, y: usize) -> f64 {
        if self.channels == 1 {
            self.get(x, y, 0)
        } else {
            0.299 * self.get(x, y, 0) + 0.587 * self.get(x, y, 1) + 0.114 * self.get(x, y, 2)
        }
    }
}

/// How far a depth map has progressed through rectification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DepthStage {
    AffineInvariant,
    GloballyAligned,
    ScaleConsistent,
}

/// Row-major depth grid with a per-pixel validity mask.
///
/// Non-finite and non-positive values are always invalid; callers may mask
/// further pixels (sky, missing measurements).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
    stage: DepthStage,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, stage: DepthStage) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ReconError::invalid("depth map dimensions must be positive"));
        }
        if values.len() != width * height {
            return Err(ReconError::invalid(format!(
                "expected {} depth values, got {}",
                width * height,
                values.len()
            )));
        }
        let valid = values.iter().map(|&d| d.is_finite() && d > 0.0).collect();
        Ok(Self {
            width,
            height,
            values,
            valid,
            stage,
        })
    }

    /// Builds a map whose validity additionally requires `d > EPS_DEPTH`.
    pub(crate) fn with_eps(
        width: usize,
        height: usize,
        values: Vec<f64>,
        prior_valid: &[bool],
        stage: DepthStage,
    ) -> Self {
        let valid = values
            .iter()
            .zip(prior_valid)
            .map(|(&d, &ok)| ok && d.is_finite() && d > EPS_DEPTH)
            .collect();
        Self {
            width,
            height,
            values,
            valid,
            stage,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn stage(&self) -> DepthStage {
        self.stage
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Marks every pixel with `mask[i] == false` invalid.
    pub fn apply_mask(&mut self, mask: &[bool]) -> Result<()> {
        if mask.len() != self.valid.len() {
            return Err(ReconError::invalid("mask resolution differs from depth map"));
        }
        for (v, &m) in self.valid.iter_mut().zip(mask) {
            *v &= m;
        }
        Ok(())
    }

    /// Returns a copy re-tagged with `stage`. Used by loaders that know the
    /// provenance of a map better than its file does.
    pub fn with_stage(mut self, stage: DepthStage) -> Self {
        self.stage = stage;
        self
    }

    pub(crate) fn require_stage(&self, expected: DepthStage) -> Result<()> {
        if self.stage != expected {
            return Err(ReconError::StageMismatch {
                expected,
                found: self.stage,
            });
        }
        Ok(())
    }

    /// Median over valid pixels, `None` when nothing is valid.
    pub fn median(&self) -> Option<f64> {
        let mut v: Vec<f64> = self
            .values
            .iter()
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .map(|(d, _)| *d)
            .collect();
        crate::metrics::median_in_place(&mut v)
    }
}
