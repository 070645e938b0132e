use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{ReconError, Result};
use crate::geometry::{euler_to_rotation, rotation_to_euler, PoseMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEntry {
    pub index: usize,
    pub translation: [f64; 3],
    /// Quaternion `[qx, qy, qz, qw]`; unit with `qw ≥ 0` when built from
    /// poses, as written when read from a file.
    pub rotation: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub entries: Vec<TrajectoryEntry>,
}

impl Trajectory {
    /// Entries for camera-to-world poses, labelled with `indices`.
    pub fn from_poses(indices: &[usize], poses: &[PoseMatrix]) -> Result<Self> {
        if indices.len() != poses.len() {
            return Err(ReconError::invalid("one index per pose is required"));
        }
        let entries = indices
            .iter()
            .zip(poses)
            .map(|(&index, p)| {
                let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(p.rotation()));
                let mut c = [q.i, q.j, q.k, q.w];
                if c[3] < 0.0 {
                    c.iter_mut().for_each(|v| *v = -*v);
                }
                let t = p.translation();
                TrajectoryEntry {
                    index,
                    translation: [t.x, t.y, t.z],
                    rotation: c,
                }
            })
            .collect();
        Ok(Self { entries })
    }

    pub fn poses(&self) -> Vec<PoseMatrix> {
        self.entries
            .iter()
            .map(|e| {
                let [x, y, z, w] = e.rotation;
                let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z));
                let t = Vector3::from(e.translation);
                PoseMatrix::from_parts(&q.to_rotation_matrix().into_inner(), &t)
            })
            .collect()
    }
}

/// Poses for frames `0..total` from poses of the `selected` frames (strictly
/// increasing, starting at 0): translations and relative Euler angles are
/// interpolated linearly between neighbours; frames past the last selected
/// one keep its pose.
pub fn interpolate_dense(selected: &[usize], poses: &[PoseMatrix], total: usize) -> Result<Vec<PoseMatrix>> {
    if selected.len() != poses.len() || selected.is_empty() {
        return Err(ReconError::invalid("one pose per selected frame is required"));
    }
    if selected[0] != 0 || selected.windows(2).any(|w| w[0] >= w[1]) || *selected.last().unwrap() >= total {
        return Err(ReconError::invalid("selected frames must increase from 0 within the sequence"));
    }
    let mut out = Vec::with_capacity(total);
    for (s, pair) in selected.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        let (pa, pb) = (&poses[s], &poses[s + 1]);
        let rel = rotation_to_euler(&(pa.rotation().transpose() * pb.rotation()));
        let (ra, ta, tb) = (pa.rotation(), pa.translation(), pb.translation());
        for f in a..b {
            let s = (f - a) as f64 / (b - a) as f64;
            let r: Matrix3<f64> = ra * euler_to_rotation([rel[0] * s, rel[1] * s, rel[2] * s]);
            out.push(if f == a { *pa } else { PoseMatrix::from_parts(&r, &(ta + (tb - ta) * s)) });
        }
    }
    let last = *poses.last().unwrap();
    while out.len() < total {
        out.push(last);
    }
    Ok(out)
}
