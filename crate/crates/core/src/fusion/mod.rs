//! Back-projection, TSDF fusion and trajectory handling.

mod trajectory;
mod tsdf;

pub use trajectory::{interpolate_dense, Trajectory, TrajectoryEntry};
pub use tsdf::{extract_surface_cloud, tsdf_integrate, TsdfVolume};

use crate::error::{ReconError, Result};
use crate::geometry::{Intrinsics, PoseMatrix};
use crate::raster::{DepthMap, DepthStage, ImageBuffer};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    /// One color per point, values in `[0, 1]`.
    pub colors: Option<Vec<[f64; 3]>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn extend(&mut self, other: &PointCloud) {
        if self.points.is_empty() {
            self.colors = other.colors.clone();
        } else {
            match (&mut self.colors, &other.colors) {
                (Some(a), Some(b)) => a.extend_from_slice(b),
                _ => self.colors = None,
            }
        }
        self.points.extend_from_slice(&other.points);
    }

    /// Axis-aligned bounds `(min, max)`; `None` for an empty cloud.
    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        let first = *self.points.first()?;
        let (mut lo, mut hi) = (first, first);
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }
}

/// One world point `P · (K⁻¹ d p)` per valid pixel, colored from `image`
/// when given.
pub fn unproject_frame(
    depth: &DepthMap,
    intr: &Intrinsics,
    pose: &PoseMatrix,
    image: Option<&ImageBuffer>,
) -> Result<PointCloud> {
    depth.require_stage(DepthStage::ScaleConsistent)?;
    if let Some(img) = image {
        if img.width() != depth.width() || img.height() != depth.height() {
            return Err(ReconError::invalid("image and depth resolutions differ"));
        }
    }
    let mut points = Vec::with_capacity(depth.valid_count());
    let mut colors = image.map(|_| Vec::with_capacity(depth.valid_count()));
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            if !depth.is_valid(x, y) {
                continue;
            }
            let w = pose.transform_point(&intr.unproject(x as f64, y as f64, depth.get(x, y)));
            points.push([w.x, w.y, w.z]);
            if let (Some(c), Some(img)) = (colors.as_mut(), image) {
                let rgb = if img.channels() == 3 {
                    [img.get(x, y, 0), img.get(x, y, 1), img.get(x, y, 2)]
                } else {
                    [img.get(x, y, 0); 3]
                };
                c.push(rgb);
            }
        }
    }
    Ok(PointCloud { points, colors })
}

/// Default fusion resolution: the longest side of the bounding box of all
/// back-projected points over 128.
pub const VOXELS_PER_EXTENT: f64 = 128.0;
/// Default truncation distance in voxels.
pub const TRUNCATION_VOXELS: f64 = 4.0;

/// Fuses all frames into one TSDF volume and extracts its surface points.
/// Returns the cloud and the voxel size used.
pub fn fuse_frames(
    depths: &[DepthMap],
    intr: &Intrinsics,
    poses: &[PoseMatrix],
    voxel: Option<f64>,
) -> Result<(PointCloud, f64)> {
    if depths.len() != poses.len() {
        return Err(ReconError::invalid("one pose per depth map is required"));
    }
    let mut all = PointCloud::default();
    for (d, p) in depths.iter().zip(poses) {
        all.extend(&unproject_frame(d, intr, p, None)?);
    }
    let (lo, hi) = all
        .bounds()
        .ok_or_else(|| ReconError::DegenerateInput("no valid depth to fuse".into()))?;
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    let voxel = match voxel {
        Some(v) if v > 0.0 => v,
        Some(_) => return Err(ReconError::invalid("voxel size must be positive")),
        None if extent > 0.0 => extent / VOXELS_PER_EXTENT,
        None => return Err(ReconError::DegenerateInput("back-projected points have no extent".into())),
    };
    let mut vol = TsdfVolume::covering(lo, hi, voxel, TRUNCATION_VOXELS * voxel)?;
    for (d, p) in depths.iter().zip(poses) {
        tsdf_integrate(&mut vol, d, intr, p);
    }
    Ok((extract_surface_cloud(&vol), voxel))
}
