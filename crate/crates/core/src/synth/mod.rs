//! Analytic synthetic scenes with exact ground truth, and affine corruption
//! of their depth.

mod corruption;
mod noise;
mod scene;

pub use corruption::{corrupt_depth, CorruptionSpec, SmoothField};
pub use scene::{render_scene, Primitive, SceneSpec, Surface, TrajectorySpec};
