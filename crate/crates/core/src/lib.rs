//! Scene reconstruction from monocular frames and affine-invariant depth maps.
//!
//! Each frame's depth is rectified by a global scale/shift and a sparse set
//! of anchor weights that drive locally weighted linear regression. Those
//! parameters, the relative camera poses and one shared focal scalar are
//! optimized jointly against photometric and geometric consistency between
//! sampled keyframe pairs. The rectified depths are then fused into a TSDF
//! volume.

pub mod alignment;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod optimizer;
pub mod raster;
pub mod sampler;
pub mod synth;

pub use alignment::{AlignmentPlan, AnchorSet, GlobalAffine, LocalAffineMaps, LwlrConfig};
pub use error::{ReconError, Result};
pub use fusion::{PointCloud, Trajectory, TsdfVolume};
pub use geometry::{Intrinsics, PixelCoord, PoseMatrix, RelativePose};
pub use losses::{LossBreakdown, LossWeights};
pub use metrics::MetricsReport;
pub use optimizer::{
    optimize, FreezeFlags, OptimizeConfig, ParamGroup, ParamVector, Preset, Problem,
    Reconstruction, SequenceInput, StageSchedule,
};
pub use raster::{DepthMap, DepthStage, ImageBuffer};
pub use sampler::{KeyframeSchedule, SamplerConfig};
pub use synth::{CorruptionSpec, SceneSpec};
