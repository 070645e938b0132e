use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{ReconError, Result};

/// Relative motion between adjacent frames: intrinsic X-Y-Z Euler angles
/// (radians) and a translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RelativePose {
    pub r: [f64; 3],
    pub t: [f64; 3],
}

/// `R = Rx(r0) · Ry(r1) · Rz(r2)`.
pub fn euler_to_rotation(r: [f64; 3]) -> Matrix3<f64> {
    let (sa, ca) = r[0].sin_cos();
    let (sb, cb) = r[1].sin_cos();
    let (sc, cc) = r[2].sin_cos();
    Matrix3::new(
        cb * cc,
        -cb * sc,
        sb,
        ca * sc + sa * sb * cc,
        ca * cc - sa * sb * sc,
        -sa * cb,
        sa * sc - ca * sb * cc,
        sa * cc + ca * sb * sc,
        ca * cb,
    )
}

/// Partial derivatives of [`euler_to_rotation`] with respect to each angle.
pub fn euler_partials(r: [f64; 3]) -> [Matrix3<f64>; 3] {
    let (sa, ca) = r[0].sin_cos();
    let (sb, cb) = r[1].sin_cos();
    let (sc, cc) = r[2].sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ca, -sa, 0.0, sa, ca);
    let ry = Matrix3::new(cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb);
    let rz = Matrix3::new(cc, -sc, 0.0, sc, cc, 0.0, 0.0, 0.0, 1.0);
    let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sa, -ca, 0.0, ca, -sa);
    let dry = Matrix3::new(-sb, 0.0, cb, 0.0, 0.0, 0.0, -cb, 0.0, -sb);
    let drz = Matrix3::new(-sc, -cc, 0.0, cc, -sc, 0.0, 0.0, 0.0, 0.0);
    [drx * ry * rz, rx * dry * rz, rx * ry * drz]
}

/// Inverse of [`euler_to_rotation`] for rotations away from gimbal lock.
pub fn rotation_to_euler(rot: &Matrix3<f64>) -> [f64; 3] {
    let b = rot[(0, 2)].clamp(-1.0, 1.0).asin();
    let a = (-rot[(1, 2)]).atan2(rot[(2, 2)]);
    let c = (-rot[(0, 1)]).atan2(rot[(0, 0)]);
    [a, b, c]
}

/// Homogeneous 4×4 rigid transform (camera-to-world when used as a frame pose).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMatrix(Matrix4<f64>);

impl PoseMatrix {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn from_parts(rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(translation);
        Self(m)
    }

    /// Wraps a matrix after checking that it is a proper rigid transform.
    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self> {
        let pose = Self(m);
        if !pose.is_rigid(1e-9) {
            return Err(ReconError::invalid("matrix is not a rigid transform"));
        }
        Ok(pose)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn compose(&self, rhs: &PoseMatrix) -> PoseMatrix {
        PoseMatrix(self.0 * rhs.0)
    }

    pub fn inverse(&self) -> PoseMatrix {
        let rt = self.rotation().transpose();
        PoseMatrix::from_parts(&rt, &(-(rt * self.translation())))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    /// Orthonormal rotation block with determinant 1 and an exact
    /// `[0, 0, 0, 1]` bottom row.
    pub fn is_rigid(&self, tol: f64) -> bool {
        let r = self.rotation();
        let ortho = (r.transpose() * r - Matrix3::identity()).amax() <= tol;
        let det = (r.determinant() - 1.0).abs() <= tol;
        let bottom = self.0[(3, 0)] == 0.0
            && self.0[(3, 1)] == 0.0
            && self.0[(3, 2)] == 0.0
            && self.0[(3, 3)] == 1.0;
        ortho && det && bottom && self.0.iter().all(|v| v.is_finite())
    }

    /// Relative parameters `(r, t)` such that `make_relative_pose` rebuilds this matrix.
    pub fn to_relative(&self) -> RelativePose {
        let t = self.translation();
        RelativePose {
            r: rotation_to_euler(&self.rotation()),
            t: [t.x, t.y, t.z],
        }
    }
}

impl Default for PoseMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn make_relative_pose(rp: &RelativePose) -> PoseMatrix {
    PoseMatrix::from_parts(
        &euler_to_rotation(rp.r),
        &Vector3::new(rp.t[0], rp.t[1], rp.t[2]),
    )
}

/// Accumulates adjacent relative poses into camera-to-world poses, starting
/// from the identity: `P_0 = I`, `P_k = P_{k-1} · rel_{k-1}`.
pub fn chain_poses(frame_count: usize, relatives: &[PoseMatrix]) -> Result<Vec<PoseMatrix>> {
    if frame_count == 0 {
        return Err(ReconError::invalid("cannot chain poses of an empty frame set"));
    }
    if relatives.len() + 1 != frame_count {
        return Err(ReconError::invalid(format!(
            "{frame_count} frames need {} relative poses, got {}",
            frame_count - 1,
            relatives.len()
        )));
    }
    let mut out = Vec::with_capacity(frame_count);
    out.push(PoseMatrix::identity());
    for rel in relatives {
        let next = out.last().unwrap().compose(rel);
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn canonical_rotations() {
        assert_eq!(euler_to_rotation([0.0; 3]), Matrix3::identity());
        let rz = euler_to_rotation([0.0, 0.0, FRAC_PI_2]);
        let expect = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((rz - expect).amax() < 1e-15);
    }

    #[test]
    fn relative_pose_construction() {
        assert_eq!(
            make_relative_pose(&RelativePose::default()),
            PoseMatrix::identity()
        );
        let p = make_relative_pose(&RelativePose {
            r: [0.0; 3],
            t: [1.0, 2.0, 3.0],
        });
        assert_eq!(p.rotation(), Matrix3::identity());
        assert_eq!(p.translation(), Vector3::new(1.0, 2.0, 3.0));
        let q = make_relative_pose(&RelativePose {
            r: [0.0; 3],
            t: [-0.5, 1.0, 0.25],
        });
        assert_eq!(p.compose(&q).translation(), Vector3::new(0.5, 3.0, 3.25));
    }

    #[test]
    fn chaining() {
        let ids = vec![PoseMatrix::identity(); 3];
        assert!(chain_poses(4, &ids)
            .unwrap()
            .iter()
            .all(|p| *p == PoseMatrix::identity()));
        let z = make_relative_pose(&RelativePose {
            r: [0.0; 3],
            t: [0.0, 0.0, 1.0],
        });
        let poses = chain_poses(2, &[z]).unwrap();
        assert_eq!(poses[1].translation(), Vector3::new(0.0, 0.0, 1.0));
        assert!(chain_poses(0, &[]).is_err());
        assert!(chain_poses(3, &ids).is_err());
    }

    #[test]
    fn chaining_matches_direct_product() {
        let rels: Vec<PoseMatrix> = (0..5)
            .map(|k| {
                let k = k as f64;
                make_relative_pose(&RelativePose {
                    r: [0.1 * k - 0.2, 0.3 - 0.05 * k, 0.07 * k],
                    t: [k * 0.3, -0.2, 1.0 - k * 0.1],
                })
            })
            .collect();
        let poses = chain_poses(6, &rels).unwrap();
        // independent left fold over raw matrices
        let mut acc = Matrix4::<f64>::identity();
        for (k, rel) in rels.iter().enumerate() {
            acc *= rel.matrix();
            assert!((poses[k + 1].matrix() - acc).amax() < 1e-12);
        }
    }

    #[test]
    fn long_chains_stay_rigid() {
        let rel = make_relative_pose(&RelativePose {
            r: [0.013, -0.021, 0.017],
            t: [0.01, 0.0, 0.02],
        });
        let poses = chain_poses(1001, &vec![rel; 1000]).unwrap();
        assert!(poses.iter().all(|p| p.is_rigid(1e-9)));
    }

    #[test]
    fn euler_partials_match_finite_differences() {
        let r = [0.3, -0.7, 1.1];
        let parts = euler_partials(r);
        let h = 1e-6;
        for k in 0..3 {
            let mut rp = r;
            let mut rm = r;
            rp[k] += h;
            rm[k] -= h;
            let fd = (euler_to_rotation(rp) - euler_to_rotation(rm)) / (2.0 * h);
            assert!((fd - parts[k]).amax() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn rotations_are_orthonormal(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0) {
            let r = euler_to_rotation([a, b, c]);
            prop_assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn euler_round_trip(a in -1.5f64..1.5, b in -1.4f64..1.4, c in -3.0f64..3.0) {
            let back = rotation_to_euler(&euler_to_rotation([a, b, c]));
            prop_assert!((back[0] - a).abs() < 1e-9);
            prop_assert!((back[1] - b).abs() < 1e-9);
            prop_assert!((back[2] - c).abs() < 1e-9);
        }
    }
}
