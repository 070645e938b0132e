//! Evaluation metrics against ground truth.

use kiddo::{KdTree, SquaredEuclidean};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ReconError, Result};
use crate::geometry::PoseMatrix;
use crate::raster::DepthMap;

/// Median of a slice, reordering it; the mean of the two middle values for
/// even lengths.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let (lower, mid, _) = values.select_nth_unstable_by(n / 2, f64::total_cmp);
    let mid = *mid;
    if n % 2 == 1 {
        return Some(mid);
    }
    let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(0.5 * (below + mid))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub delta1: f64,
    /// Scale applied to the predictions before scoring.
    pub scale: f64,
}

/// AbsRel and δ1 over all pixels valid in both sequences. With `align`, one
/// sequence-wide scale `median(gt) / median(pred)` is applied first.
pub fn metric_depth(pred: &[DepthMap], gt: &[DepthMap], align: bool) -> Result<DepthMetrics> {
    if pred.len() != gt.len() {
        return Err(ReconError::invalid("prediction and ground-truth counts differ"));
    }
    let mut pairs = Vec::new();
    for (p, g) in pred.iter().zip(gt) {
        if p.width() != g.width() || p.height() != g.height() {
            return Err(ReconError::invalid("prediction and ground-truth resolutions differ"));
        }
        for ((pv, gv), (pok, gok)) in p
            .values()
            .iter()
            .zip(g.values())
            .zip(p.validity().iter().zip(g.validity()))
        {
            if *pok && *gok {
                pairs.push((*pv, *gv));
            }
        }
    }
    if pairs.is_empty() {
        return Err(ReconError::DegenerateInput("no overlapping valid depth pixels".into()));
    }
    let scale = if align {
        let mut ps: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut gs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        median_in_place(&mut gs).unwrap() / median_in_place(&mut ps).unwrap()
    } else {
        1.0
    };
    let (mut rel, mut good) = (0.0, 0usize);
    for &(p, g) in &pairs {
        let p = p * scale;
        rel += (p - g).abs() / g;
        if (p / g).max(g / p) < 1.25 {
            good += 1;
        }
    }
    let n = pairs.len() as f64;
    Ok(DepthMetrics {
        abs_rel: rel / n,
        delta1: good as f64 / n,
        scale,
    })
}

/// `x ↦ s·R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * x) + self.translation
    }

    /// Maps a camera-to-world pose; the rotation is left-multiplied, the
    /// position transformed.
    pub fn apply_pose(&self, p: &PoseMatrix) -> PoseMatrix {
        PoseMatrix::from_parts(&(self.rotation * p.rotation()), &self.apply(&p.translation()))
    }
}

/// Least-squares similarity with `target ≈ s·R·source + t`.
pub fn umeyama(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> Result<Similarity> {
    if source.len() != target.len() || source.is_empty() {
        return Err(ReconError::invalid("similarity fit needs equally many points, at least one"));
    }
    let n = source.len() as f64;
    let mu_s = source.iter().sum::<Vector3<f64>>() / n;
    let mu_t = target.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, t) in source.iter().zip(target) {
        let (ds, dt) = (s - mu_s, t - mu_t);
        cov += dt * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov /= n;
    var_s /= n;
    if var_s <= 1e-300 {
        return Ok(Similarity {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: mu_t - mu_s,
        });
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * v_t;
    let scale = (Matrix3::from_diagonal(&svd.singular_values) * d).trace() / var_s;
    Ok(Similarity {
        scale,
        rotation,
        translation: mu_t - scale * (rotation * mu_s),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub ate: f64,
    pub rpe_t: f64,
    /// Degrees.
    pub rpe_r: f64,
}

fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// ATE and RPE after mapping `pred` through `sim`.
pub fn trajectory_errors(pred: &[PoseMatrix], gt: &[PoseMatrix], sim: &Similarity) -> Result<TrajectoryMetrics> {
    if pred.len() != gt.len() {
        return Err(ReconError::invalid("trajectory lengths differ"));
    }
    if pred.len() < 2 {
        return Err(ReconError::invalid("trajectory metrics need at least two poses"));
    }
    let aligned: Vec<PoseMatrix> = pred.iter().map(|p| sim.apply_pose(p)).collect();
    let n = pred.len() as f64;
    let ate = (aligned
        .iter()
        .zip(gt)
        .map(|(a, g)| (a.translation() - g.translation()).norm_squared())
        .sum::<f64>()
        / n)
        .sqrt();
    let (mut et, mut er) = (0.0, 0.0);
    for k in 0..pred.len() - 1 {
        let dp = aligned[k].inverse().compose(&aligned[k + 1]);
        let dg = gt[k].inverse().compose(&gt[k + 1]);
        let e = dg.inverse().compose(&dp);
        et += e.translation().norm_squared();
        er += rotation_angle(&e.rotation()).powi(2);
    }
    let m = (pred.len() - 1) as f64;
    Ok(TrajectoryMetrics {
        ate,
        rpe_t: (et / m).sqrt(),
        rpe_r: (er / m).sqrt().to_degrees(),
    })
}

/// Similarity-aligns predicted positions to ground truth, then scores ATE
/// and consecutive-pair RPE.
pub fn metric_trajectory(pred: &[PoseMatrix], gt: &[PoseMatrix]) -> Result<(TrajectoryMetrics, Similarity)> {
    if pred.len() != gt.len() {
        return Err(ReconError::invalid("trajectory lengths differ"));
    }
    let src: Vec<Vector3<f64>> = pred.iter().map(|p| p.translation()).collect();
    let dst: Vec<Vector3<f64>> = gt.iter().map(|p| p.translation()).collect();
    let sim = umeyama(&src, &dst)?;
    Ok((trajectory_errors(pred, gt, &sim)?, sim))
}

/// Diagonal of the bounding box of the camera positions.
pub fn trajectory_extent(poses: &[PoseMatrix]) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in poses {
        let t = p.translation();
        lo = lo.inf(&t);
        hi = hi.sup(&t);
    }
    if poses.is_empty() {
        0.0
    } else {
        (hi - lo).norm()
    }
}

/// `|fov_pred − fov_gt| / fov_gt`.
pub fn fov_abs_rel(fov_pred: f64, fov_gt: f64) -> f64 {
    (fov_pred - fov_gt).abs() / fov_gt
}

/// Horizontal FOV error of the focal `δ·f0` against a ground-truth focal.
pub fn metric_fov(delta: f64, f0: f64, width: usize, gt_focal: f64) -> Result<f64> {
    let f = delta * f0;
    if !(f > 0.0 && gt_focal > 0.0) {
        return Err(ReconError::invalid("focal lengths must be positive"));
    }
    let fov = |f: f64| 2.0 * (width as f64 / (2.0 * f)).atan();
    Ok(fov_abs_rel(fov(f), fov(gt_focal)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudMetrics {
    pub chamfer_l1: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Distance from every query point to its nearest neighbour in `reference`.
pub fn nearest_distances(query: &[[f64; 3]], reference: &[[f64; 3]]) -> Vec<f64> {
    let mut tree: KdTree<f64, 3> = KdTree::with_capacity(reference.len());
    for (i, p) in reference.iter().enumerate() {
        tree.add(p, i as u64);
    }
    query
        .iter()
        .map(|q| dist(q, &reference[tree.nearest_one::<SquaredEuclidean>(q).item as usize]))
        .collect()
}

/// Symmetric Chamfer-l1 and F-score at threshold `tau` (strict `<`).
pub fn metric_cloud(pred: &[[f64; 3]], gt: &[[f64; 3]], tau: f64) -> Result<CloudMetrics> {
    if pred.is_empty() || gt.is_empty() {
        return Err(ReconError::DegenerateInput("cloud metrics need two non-empty clouds".into()));
    }
    let d_pg = nearest_distances(pred, gt);
    let d_gp = nearest_distances(gt, pred);
    let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
    let frac = |d: &[f64]| d.iter().filter(|x| **x < tau).count() as f64 / d.len() as f64;
    let (precision, recall) = (frac(&d_pg), frac(&d_gp));
    let fscore = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(CloudMetrics {
        chamfer_l1: 0.5 * (mean(&d_pg) + mean(&d_gp)),
        precision,
        recall,
        fscore,
    })
}

/// The full report of a run against ground truth. Entries are `None` when
/// the ground truth they need is missing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub abs_rel: Option<f64>,
    pub delta1: Option<f64>,
    pub ate: Option<f64>,
    pub rpe_t: Option<f64>,
    /// Degrees.
    pub rpe_r: Option<f64>,
    pub fov_abs_rel: Option<f64>,
    pub chamfer_l1: Option<f64>,
    pub fscore: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::euler_to_rotation;
    use crate::raster::DepthStage;

    fn map(vals: Vec<f64>) -> DepthMap {
        DepthMap::new(vals.len(), 1, vals, DepthStage::ScaleConsistent).unwrap()
    }

    #[test]
    fn medians() {
        assert_eq!(median_in_place(&mut []), None);
        assert_eq!(median_in_place(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median_in_place(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }

    #[test]
    fn depth_examples() {
        let gt = map(vec![1.0, 2.0, 4.0]);
        let m = metric_depth(std::slice::from_ref(&gt), std::slice::from_ref(&gt), true).unwrap();
        assert_eq!((m.abs_rel, m.delta1), (0.0, 1.0));
        let scaled = map(vec![1.3, 2.6, 5.2]);
        let m = metric_depth(&[scaled], &[gt], true).unwrap();
        assert!(m.abs_rel < 1e-15 && m.delta1 == 1.0);
        let half = metric_depth(&[map(vec![1.3, 1.0])], &[map(vec![1.0, 1.0])], false).unwrap();
        assert!((half.abs_rel - 0.15).abs() < 1e-15);
        assert_eq!(half.delta1, 0.5);
        // boundary ratio does not count
        let edge = metric_depth(&[map(vec![1.25])], &[map(vec![1.0])], false).unwrap();
        assert_eq!(edge.delta1, 0.0);
    }

    #[test]
    fn fov_examples() {
        assert_eq!(metric_fov(1.0, 100.0, 64, 100.0).unwrap(), 0.0);
        assert!((fov_abs_rel(60.0, 50.0) - 0.2).abs() < 1e-15);
        assert!((fov_abs_rel(50.0, 60.0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn cloud_examples() {
        let a = [[0.0, 0.0, 0.0]];
        let b = [[0.3, 0.4, 0.0]];
        let m = metric_cloud(&a, &b, 1.0).unwrap();
        assert!((m.chamfer_l1 - 0.5).abs() < 1e-15);
        assert_eq!(m.fscore, 1.0);
        assert_eq!(metric_cloud(&a, &b, 0.5).unwrap().fscore, 0.0);
        assert_eq!(metric_cloud(&a, &a, 0.1).unwrap().chamfer_l1, 0.0);
        assert!(metric_cloud(&a, &[], 0.1).is_err());
    }

    fn line(n: usize) -> Vec<PoseMatrix> {
        (0..n)
            .map(|k| PoseMatrix::from_parts(&Matrix3::identity(), &Vector3::new(k as f64, 0.0, 0.0)))
            .collect()
    }

    #[test]
    fn similarity_absorbed() {
        let gt: Vec<PoseMatrix> = (0..6)
            .map(|k| {
                let a = k as f64 * 0.1;
                PoseMatrix::from_parts(
                    &euler_to_rotation([0.0, a, 0.0]),
                    &Vector3::new(a.cos() * 2.0, 0.1 * k as f64, a.sin()),
                )
            })
            .collect();
        let (m, _) = metric_trajectory(&gt, &gt).unwrap();
        assert!(m.ate < 1e-12 && m.rpe_t < 1e-12 && m.rpe_r < 1e-6);
        let sim = Similarity {
            scale: 2.5,
            rotation: euler_to_rotation([0.3, -0.2, 1.0]),
            translation: Vector3::new(1.0, -2.0, 0.5),
        };
        let moved: Vec<PoseMatrix> = gt.iter().map(|p| sim.apply_pose(p)).collect();
        let (m, fit) = metric_trajectory(&moved, &gt).unwrap();
        assert!((fit.scale - 0.4).abs() < 1e-12);
        assert!(m.ate < 1e-12 && m.rpe_t < 1e-12 && m.rpe_r < 1e-6);
    }

    #[test]
    fn rotation_perturbation_on_a_line() {
        let gt = line(5);
        let mut pred = gt.clone();
        let theta = 0.1f64;
        pred[2] = PoseMatrix::from_parts(&euler_to_rotation([0.0, 0.0, theta]), &pred[2].translation());
        let (m, _) = metric_trajectory(&pred, &gt).unwrap();
        assert!(m.ate < 1e-12);
        assert!((m.rpe_t - (theta / 2.0).sin()).abs() < 1e-12);
        assert!((m.rpe_r - (theta / 2f64.sqrt()).to_degrees()).abs() < 1e-9);
    }

    #[test]
    fn translation_perturbation_without_alignment() {
        let gt = line(5);
        let mut pred = gt.clone();
        pred[2] = PoseMatrix::from_parts(&Matrix3::identity(), &Vector3::new(2.0, 0.3, 0.0));
        let m = trajectory_errors(&pred, &gt, &Similarity::identity()).unwrap();
        assert!((m.ate - (0.09f64 / 5.0).sqrt()).abs() < 1e-15);
        assert!((m.rpe_t - (2.0 * 0.09f64 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(m.rpe_r, 0.0);
        assert!(metric_trajectory(&pred[..3], &gt).is_err());
    }
}
