//! Scoring a reconstruction against whatever ground truth the bundle carries.

use anyhow::{bail, Result};
use nalgebra::Vector3;
use recon_core::metrics::{metric_cloud, metric_depth, metric_fov, metric_trajectory, trajectory_extent};
use recon_core::{DepthMap, Intrinsics, MetricsReport, PointCloud, PoseMatrix};
use serde::{Deserialize, Serialize};

use crate::dataset::{GroundTruth, GtIntrinsics};

/// The cloud F-score threshold in voxels.
pub const FSCORE_VOXELS: f64 = 2.0;

/// One reconstruction as seen by the evaluator.
#[derive(Debug, Clone, Copy)]
pub struct Prediction<'a> {
    /// Frame index of every prediction below.
    pub frames: &'a [usize],
    pub depths: &'a [DepthMap],
    pub poses: &'a [PoseMatrix],
    pub intrinsics: &'a Intrinsics,
    pub cloud: &'a PointCloud,
    pub voxel_size: f64,
}

/// Quantities behind the headline metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalDetails {
    pub frames: Vec<usize>,
    /// Median-ratio scale applied to predicted depth.
    pub depth_scale: Option<f64>,
    pub trajectory_extent: Option<f64>,
    /// ATE as a fraction of the trajectory extent.
    pub ate_fraction: Option<f64>,
    /// Scale of the prediction-to-ground-truth similarity.
    pub similarity_scale: Option<f64>,
    pub voxel_size: f64,
    /// Cloud threshold in ground-truth units.
    pub cloud_threshold: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: MetricsReport,
    pub details: EvalDetails,
}

/// Ground-truth surface samples: every valid GT depth pixel back-projected
/// with the full GT calibration.
fn gt_cloud(depths: &[&DepthMap], poses: &[PoseMatrix], k: &GtIntrinsics) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for (d, pose) in depths.iter().zip(poses) {
        for y in 0..d.height() {
            for x in 0..d.width() {
                if !d.is_valid(x, y) {
                    continue;
                }
                let z = d.get(x, y);
                let c = Vector3::new((x as f64 - k.cx) * z / k.fx, (y as f64 - k.cy) * z / k.fy, z);
                let w = pose.transform_point(&c);
                out.push([w.x, w.y, w.z]);
            }
        }
    }
    out
}

pub fn evaluate(pred: &Prediction<'_>, gt: &GroundTruth) -> Result<EvalReport> {
    let n = pred.frames.len();
    if pred.depths.len() != n || pred.poses.len() != n {
        bail!("prediction streams have different lengths");
    }
    let mut report = EvalReport {
        details: EvalDetails {
            frames: pred.frames.to_vec(),
            voxel_size: pred.voxel_size,
            ..Default::default()
        },
        ..Default::default()
    };
    let (m, d) = (&mut report.metrics, &mut report.details);

    let gt_depths: Option<Vec<&DepthMap>> = gt.depths.as_ref().map(|all| pred.frames.iter().map(|&f| &all[f]).collect());
    if let Some(gd) = &gt_depths {
        let owned: Vec<DepthMap> = gd.iter().map(|x| (*x).clone()).collect();
        let dm = metric_depth(pred.depths, &owned, true)?;
        m.abs_rel = Some(dm.abs_rel);
        m.delta1 = Some(dm.delta1);
        d.depth_scale = Some(dm.scale);
    }

    let gt_poses: Option<Vec<PoseMatrix>> = gt.poses.as_ref().map(|all| pred.frames.iter().map(|&f| all[f]).collect());
    let mut similarity = None;
    if let Some(gp) = &gt_poses {
        let (tm, sim) = metric_trajectory(pred.poses, gp)?;
        let extent = trajectory_extent(gp);
        m.ate = Some(tm.ate);
        m.rpe_t = Some(tm.rpe_t);
        m.rpe_r = Some(tm.rpe_r);
        d.trajectory_extent = Some(extent);
        d.ate_fraction = (extent > 0.0).then(|| tm.ate / extent);
        d.similarity_scale = Some(sim.scale);
        similarity = Some(sim);
    }

    if let Some(k) = &gt.intrinsics {
        m.fov_abs_rel = Some(metric_fov(pred.intrinsics.delta, pred.intrinsics.f0, pred.intrinsics.width, k.fx)?);
    }

    if let (Some(gd), Some(gp), Some(k), Some(sim)) = (&gt_depths, &gt_poses, &gt.intrinsics, &similarity) {
        if pred.cloud.is_empty() {
            log::warn!("fused cloud is empty; cloud metrics skipped");
        } else {
            let aligned: Vec<[f64; 3]> = pred
                .cloud
                .points
                .iter()
                .map(|p| {
                    let v = sim.apply(&Vector3::from(*p));
                    [v.x, v.y, v.z]
                })
                .collect();
            let reference = gt_cloud(gd, gp, k);
            let tau = FSCORE_VOXELS * pred.voxel_size * sim.scale;
            let cm = metric_cloud(&aligned, &reference, tau)?;
            m.chamfer_l1 = Some(cm.chamfer_l1);
            m.fscore = Some(cm.fscore);
            d.cloud_threshold = Some(tau);
            d.precision = Some(cm.precision);
            d.recall = Some(cm.recall);
        }
    }
    Ok(report)
}
