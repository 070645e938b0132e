use nalgebra::Vector3;

use super::PointCloud;
use crate::error::{ReconError, Result};
use crate::geometry::{Intrinsics, PoseMatrix};
use crate::raster::{DepthMap, EPS_DEPTH};

/// Dense truncated signed-distance grid. Voxel `(i, j, k)` has its center at
/// `origin + voxel · (i, j, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TsdfVolume {
    pub voxel: f64,
    pub truncation: f64,
    pub origin: [f64; 3],
    pub dims: [usize; 3],
    sdf: Vec<f64>,
    weight: Vec<f64>,
}

impl TsdfVolume {
    pub fn new(origin: [f64; 3], dims: [usize; 3], voxel: f64, truncation: f64) -> Result<Self> {
        if !(voxel > 0.0 && voxel.is_finite()) {
            return Err(ReconError::invalid("voxel size must be positive"));
        }
        if !(truncation >= voxel) {
            return Err(ReconError::invalid("truncation must be at least one voxel"));
        }
        let n = dims.iter().product::<usize>();
        if n == 0 || n > 64 << 20 {
            return Err(ReconError::invalid(format!("unsupported volume dimensions {dims:?}")));
        }
        Ok(Self {
            voxel,
            truncation,
            origin,
            dims,
            sdf: vec![0.0; n],
            weight: vec![0.0; n],
        })
    }

    /// A volume covering `[lo, hi]` padded by the truncation distance.
    pub fn covering(lo: [f64; 3], hi: [f64; 3], voxel: f64, truncation: f64) -> Result<Self> {
        let mut origin = [0.0; 3];
        let mut dims = [0usize; 3];
        for a in 0..3 {
            origin[a] = lo[a] - truncation;
            dims[a] = ((hi[a] - lo[a] + 2.0 * truncation) / voxel).ceil() as usize + 1;
        }
        Self::new(origin, dims, voxel, truncation)
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.origin[0] + self.voxel * i as f64,
            self.origin[1] + self.voxel * j as f64,
            self.origin[2] + self.voxel * k as f64,
        )
    }

    pub fn sdf(&self, i: usize, j: usize, k: usize) -> f64 {
        self.sdf[self.index(i, j, k)]
    }

    pub fn weight(&self, i: usize, j: usize, k: usize) -> f64 {
        self.weight[self.index(i, j, k)]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn sdf_values(&self) -> &[f64] {
        &self.sdf
    }
}

/// Integrates one depth map observed from camera-to-world pose `pose`.
///
/// Each voxel center is projected to its nearest pixel; where that pixel is
/// valid, `depth − z` clamped to `+truncation` enters a running average with
/// unit weight. Voxels more than `truncation` behind the surface are skipped.
pub fn tsdf_integrate(vol: &mut TsdfVolume, depth: &DepthMap, intr: &Intrinsics, pose: &PoseMatrix) {
    let r_t = pose.rotation().transpose();
    let cam_origin = -(r_t * pose.translation());
    let (f, cx, cy) = (intr.focal(), intr.cx(), intr.cy());
    let (w, h) = (depth.width() as f64, depth.height() as f64);
    let [nx, ny, nz] = vol.dims;
    let step = r_t * Vector3::new(vol.voxel, 0.0, 0.0);
    for k in 0..nz {
        for j in 0..ny {
            let row_start = r_t * vol.center(0, j, k) + cam_origin;
            for i in 0..nx {
                let p = row_start + step * i as f64;
                if p.z <= EPS_DEPTH {
                    continue;
                }
                let u = (f * p.x / p.z + cx).round();
                let v = (f * p.y / p.z + cy).round();
                if !(u >= 0.0 && v >= 0.0 && u < w && v < h) {
                    continue;
                }
                let (px, py) = (u as usize, v as usize);
                if !depth.is_valid(px, py) {
                    continue;
                }
                let sdf = depth.get(px, py) - p.z;
                if sdf < -vol.truncation {
                    continue;
                }
                let sdf = sdf.min(vol.truncation);
                let idx = vol.index(i, j, k);
                let wgt = vol.weight[idx];
                // the clamp only absorbs rounding of the running mean
                vol.sdf[idx] = ((vol.sdf[idx] * wgt + sdf) / (wgt + 1.0)).clamp(-vol.truncation, vol.truncation);
                vol.weight[idx] = wgt + 1.0;
            }
        }
    }
}

/// Linearly interpolated zero crossings between axis-adjacent observed voxels
/// of opposite sign. Pairs touching a truncated value are skipped: those
/// mark free-space or occlusion jumps, not surfaces.
pub fn extract_surface_cloud(vol: &TsdfVolume) -> PointCloud {
    let [nx, ny, nz] = vol.dims;
    let mut points = Vec::new();
    let observed = |idx: usize| vol.weight[idx] > 0.0;
    let usable = |s: f64| s.abs() < vol.truncation;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let a_idx = vol.index(i, j, k);
                if !observed(a_idx) {
                    continue;
                }
                let a = vol.sdf[a_idx];
                let neighbours = [
                    (i + 1 < nx).then(|| (i + 1, j, k)),
                    (j + 1 < ny).then(|| (i, j + 1, k)),
                    (k + 1 < nz).then(|| (i, j, k + 1)),
                ];
                for (ni, nj, nk) in neighbours.into_iter().flatten() {
                    let b_idx = vol.index(ni, nj, nk);
                    if !observed(b_idx) {
                        continue;
                    }
                    let b = vol.sdf[b_idx];
                    if (a >= 0.0) == (b >= 0.0) || !usable(a) || !usable(b) {
                        continue;
                    }
                    let t = a / (a - b);
                    let pa = vol.center(i, j, k);
                    let p = pa + (vol.center(ni, nj, nk) - pa) * t;
                    points.push([p.x, p.y, p.z]);
                }
            }
        }
    }
    PointCloud { points, colors: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::DepthStage;

    fn plane_setup() -> (DepthMap, Intrinsics, TsdfVolume) {
        let intr = Intrinsics::new(1.0, 40.0, 32, 24).unwrap();
        let d = DepthMap::new(32, 24, vec![2.0; 32 * 24], DepthStage::ScaleConsistent).unwrap();
        let vol = TsdfVolume::covering([-0.3, -0.2, 1.5], [0.3, 0.2, 2.5], 0.05, 0.2).unwrap();
        (d, intr, vol)
    }

    #[test]
    fn empty_volume() {
        let (_, _, vol) = plane_setup();
        assert!(vol.weights().iter().all(|w| *w == 0.0));
        assert!(extract_surface_cloud(&vol).is_empty());
        assert!(TsdfVolume::new([0.0; 3], [2, 2, 2], 0.1, 0.05).is_err());
    }

    #[test]
    fn fronto_parallel_plane() {
        let (d, intr, mut vol) = plane_setup();
        tsdf_integrate(&mut vol, &d, &intr, &PoseMatrix::identity());
        assert!(vol
            .sdf_values()
            .iter()
            .all(|s| s.abs() <= vol.truncation));
        let (ci, cj) = (vol.dims[0] / 2, vol.dims[1] / 2);
        let mut crossing = None;
        for k in 0..vol.dims[2] - 1 {
            let (a, b) = (vol.sdf(ci, cj, k), vol.sdf(ci, cj, k + 1));
            if vol.weight(ci, cj, k) > 0.0 && vol.weight(ci, cj, k + 1) > 0.0 && a >= 0.0 && b < 0.0 {
                crossing = Some(vol.center(ci, cj, k).z);
            }
        }
        let z = crossing.expect("a sign change along the optical axis");
        assert!((z - 2.0).abs() <= vol.voxel);

        let cloud = extract_surface_cloud(&vol);
        assert!(!cloud.is_empty());
        assert!(cloud.points.iter().all(|p| (p[2] - 2.0).abs() <= vol.voxel / 2.0));
    }

    #[test]
    fn repeated_frames_average() {
        let (d, intr, mut vol) = plane_setup();
        tsdf_integrate(&mut vol, &d, &intr, &PoseMatrix::identity());
        let once = vol.clone();
        tsdf_integrate(&mut vol, &d, &intr, &PoseMatrix::identity());
        assert_eq!(once.sdf_values(), vol.sdf_values());
        for (a, b) in once.weights().iter().zip(vol.weights()) {
            assert_eq!(2.0 * a, *b);
        }
        let c1 = extract_surface_cloud(&once);
        let c2 = extract_surface_cloud(&vol);
        assert_eq!(c1, c2);
    }
}
