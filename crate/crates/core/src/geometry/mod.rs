//! Pinhole camera, rigid poses, bilinear sampling and the depth-based warp
//! between frames.

mod camera;
mod pose;
mod sampling;
mod warp;

pub use camera::{init_focal, intrinsics_matrix, Intrinsics};
pub use pose::{
    chain_poses, euler_partials, euler_to_rotation, make_relative_pose, rotation_to_euler,
    PoseMatrix, RelativePose,
};
pub use sampling::{sample_depth, sample_image, BilinearCell, Sample};
pub use warp::{warp_point, Warp};

/// Continuous pixel coordinate; the homogeneous scale is implicitly 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}
