use nalgebra::{Matrix3, Vector3};

use super::{Intrinsics, PixelCoord, PoseMatrix};
use crate::raster::EPS_DEPTH;

/// A pixel carried from frame `i` into frame `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Warp {
    pub coord: PixelCoord,
    /// z-depth of the point in frame `j`'s camera.
    pub depth: f64,
    pub valid: bool,
}

/// Relative transform `(R_jᵀ R_i, R_jᵀ (t_i − t_j))` mapping camera `i`
/// coordinates into camera `j`.
pub(crate) fn relative_transform(
    pose_i: &PoseMatrix,
    pose_j: &PoseMatrix,
) -> (Matrix3<f64>, Vector3<f64>) {
    let rj_t = pose_j.rotation().transpose();
    (
        rj_t * pose_i.rotation(),
        rj_t * (pose_i.translation() - pose_j.translation()),
    )
}

pub(crate) fn is_identity_transform(rot: &Matrix3<f64>, trans: &Vector3<f64>) -> bool {
    *rot == Matrix3::identity() && trans.iter().all(|v| *v == 0.0)
}

/// Warps pixel `p_i` with depth `d_i` from camera `i` into camera `j`:
/// `d' · p' = K R_jᵀ [R_i K⁻¹ d_i p_i + t_i − t_j]`.
///
/// The result is valid when the warped depth exceeds [`EPS_DEPTH`] and the
/// warped coordinate lies inside the image. An exactly identical pose pair
/// returns `p_i` and `d_i` untouched.
pub fn warp_point(
    p_i: PixelCoord,
    d_i: f64,
    intr: &Intrinsics,
    pose_i: &PoseMatrix,
    pose_j: &PoseMatrix,
) -> Warp {
    let invalid = Warp {
        coord: p_i,
        depth: d_i,
        valid: false,
    };
    if !(d_i.is_finite() && d_i > 0.0) {
        return invalid;
    }
    let (rot, trans) = relative_transform(pose_i, pose_j);
    let in_bounds = |c: PixelCoord| {
        c.u >= 0.0
            && c.v >= 0.0
            && c.u <= (intr.width - 1) as f64
            && c.v <= (intr.height - 1) as f64
    };
    if pose_i == pose_j || is_identity_transform(&rot, &trans) {
        return Warp {
            coord: p_i,
            depth: d_i,
            valid: d_i > EPS_DEPTH && in_bounds(p_i),
        };
    }
    let x = rot * intr.unproject(p_i.u, p_i.v, d_i) + trans;
    if !(x.z > EPS_DEPTH) {
        return Warp {
            coord: p_i,
            depth: x.z,
            valid: false,
        };
    }
    let f = intr.focal();
    let coord = PixelCoord::new(f * x.x / x.z + intr.cx(), f * x.y / x.z + intr.cy());
    Warp {
        coord,
        depth: x.z,
        valid: in_bounds(coord),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_relative_pose, RelativePose};

    fn intr() -> Intrinsics {
        Intrinsics::new(1.0, 76.8, 64, 48).unwrap()
    }

    #[test]
    fn identical_poses_are_identity() {
        let p = PoseMatrix::identity();
        let w = warp_point(PixelCoord::new(12.3, 7.9), 2.5, &intr(), &p, &p);
        assert!(w.valid);
        assert_eq!(w.coord, PixelCoord::new(12.3, 7.9));
        assert_eq!(w.depth, 2.5);
    }

    #[test]
    fn forward_translation_on_axis() {
        let k = intr();
        let pj = make_relative_pose(&RelativePose {
            r: [0.0; 3],
            t: [0.0, 0.0, 0.5],
        });
        let w = warp_point(
            PixelCoord::new(k.cx(), k.cy()),
            2.0,
            &k,
            &PoseMatrix::identity(),
            &pj,
        );
        assert!(w.valid);
        assert!((w.depth - 1.5).abs() < 1e-12);
        assert!((w.coord.u - k.cx()).abs() < 1e-12 && (w.coord.v - k.cy()).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_rejected() {
        let k = intr();
        let pj = make_relative_pose(&RelativePose {
            r: [0.0; 3],
            t: [0.0, 0.0, 3.0],
        });
        let w = warp_point(PixelCoord::new(30.0, 20.0), 2.0, &k, &PoseMatrix::identity(), &pj);
        assert!(!w.valid);
        let w = warp_point(PixelCoord::new(30.0, 20.0), -1.0, &k, &PoseMatrix::identity(), &pj);
        assert!(!w.valid);
    }
}
