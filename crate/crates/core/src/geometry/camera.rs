use nalgebra::{Matrix3, Vector3};

use crate::error::{ReconError, Result};

/// Base focal length `1.2 · max(width, height)` used to seed the pinhole model.
pub fn init_focal(width: usize, height: usize) -> Result<f64> {
    if width == 0 || height == 0 {
        return Err(ReconError::invalid(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(1.2 * width.max(height) as f64)
}

/// Pinhole intrinsics with a single learnable focal multiplier and the
/// principal point fixed at the image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub delta: f64,
    pub f0: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(delta: f64, f0: f64, width: usize, height: usize) -> Result<Self> {
        let intr = Self {
            delta,
            f0,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Intrinsics for an image at the base focal (`delta = 1`).
    pub fn initial(width: usize, height: usize) -> Result<Self> {
        Self::new(1.0, init_focal(width, height)?, width, height)
    }

    /// Intrinsics reproducing a known focal length exactly.
    pub fn from_focal(focal: f64, width: usize, height: usize) -> Result<Self> {
        let f0 = init_focal(width, height)?;
        Self::new(focal / f0, f0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(ReconError::invalid(format!(
                "focal multiplier must be positive, got {}",
                self.delta
            )));
        }
        if !(self.f0.is_finite() && self.f0 > 0.0) {
            return Err(ReconError::invalid("base focal must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(ReconError::invalid("image dimensions must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn focal(&self) -> f64 {
        self.delta * self.f0
    }

    #[inline]
    pub fn cx(&self) -> f64 {
        self.width as f64 / 2.0
    }

    #[inline]
    pub fn cy(&self) -> f64 {
        self.height as f64 / 2.0
    }

    /// Horizontal field of view in radians.
    pub fn fov_x(&self) -> f64 {
        2.0 * (self.width as f64 / (2.0 * self.focal())).atan()
    }

    /// Back-projects pixel `(u, v)` at z-depth `d` into the camera frame.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, d: f64) -> Vector3<f64> {
        let f = self.focal();
        Vector3::new((u - self.cx()) / f * d, (v - self.cy()) / f * d, d)
    }

    /// Projects a camera-frame point; `None` when it is not in front of the camera.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= crate::raster::EPS_DEPTH {
            return None;
        }
        let f = self.focal();
        Some((f * p.x / p.z + self.cx(), f * p.y / p.z + self.cy()))
    }
}

/// The 3×3 calibration matrix `K`.
pub fn intrinsics_matrix(intr: &Intrinsics) -> Result<Matrix3<f64>> {
    intr.validate()?;
    let f = intr.focal();
    Ok(Matrix3::new(
        f,
        0.0,
        intr.cx(),
        0.0,
        f,
        intr.cy(),
        0.0,
        0.0,
        1.0,
    ))
}
