//! Metrics against brute-force and hand-computed references.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recon_core::metrics::{metric_cloud, metric_depth, metric_fov, metric_trajectory, trajectory_errors, Similarity};
use recon_core::{DepthMap, DepthStage, PoseMatrix};

fn brute_nearest(q: &[f64; 3], cloud: &[[f64; 3]]) -> f64 {
    cloud
        .iter()
        .map(|p| {
            let d = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n).map(|_| [0.0; 3].map(|_: f64| rng.random_range(-1.0..1.0))).collect()
}

#[test]
fn cloud_metrics_equal_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [500, 1000] {
        let pred = random_cloud(&mut rng, n);
        let gt = random_cloud(&mut rng, n - 37);
        let tau = 0.1;
        let got = metric_cloud(&pred, &gt, tau).unwrap();
        let d_pg: Vec<f64> = pred.iter().map(|q| brute_nearest(q, &gt)).collect();
        let d_gp: Vec<f64> = gt.iter().map(|q| brute_nearest(q, &pred)).collect();
        let chamfer = 0.5 * (d_pg.iter().sum::<f64>() / d_pg.len() as f64 + d_gp.iter().sum::<f64>() / d_gp.len() as f64);
        let p = d_pg.iter().filter(|d| **d < tau).count() as f64 / d_pg.len() as f64;
        let r = d_gp.iter().filter(|d| **d < tau).count() as f64 / d_gp.len() as f64;
        assert_eq!(got.chamfer_l1, chamfer);
        assert_eq!((got.precision, got.recall), (p, r));
        assert_eq!(got.fscore, 2.0 * p * r / (p + r));
    }
}

#[test]
fn cloud_single_points() {
    let m = metric_cloud(&[[0.0, 0.0, 0.0]], &[[0.3, 0.4, 0.0]], 0.6).unwrap();
    assert_eq!((m.chamfer_l1, m.fscore), (0.5, 1.0));
    let m = metric_cloud(&[[0.0, 0.0, 0.0]], &[[0.3, 0.4, 0.0]], 0.5).unwrap();
    assert_eq!(m.fscore, 0.0);
    assert!(metric_cloud(&[], &[[0.0; 3]], 1.0).is_err());
}

#[test]
fn depth_hand_computed() {
    let gt = DepthMap::new(2, 1, vec![2.0, 4.0], DepthStage::ScaleConsistent).unwrap();
    let pred = DepthMap::new(2, 1, vec![2.6, 4.0], DepthStage::ScaleConsistent).unwrap();
    let m = metric_depth(&[pred], std::slice::from_ref(&gt), false).unwrap();
    assert!((m.abs_rel - 0.15).abs() < 1e-15);
    assert_eq!(m.delta1, 0.5);
    let scaled = DepthMap::new(2, 1, vec![2.6, 5.2], DepthStage::ScaleConsistent).unwrap();
    let m = metric_depth(&[scaled], &[gt], true).unwrap();
    assert!(m.abs_rel < 1e-15);
    assert_eq!(m.delta1, 1.0);
}

#[test]
fn delta1_boundary_is_excluded() {
    let gt = DepthMap::new(1, 1, vec![4.0], DepthStage::ScaleConsistent).unwrap();
    let pred = DepthMap::new(1, 1, vec![5.0], DepthStage::ScaleConsistent).unwrap();
    assert_eq!(metric_depth(&[pred], &[gt], false).unwrap().delta1, 0.0);
}

fn line(n: usize) -> Vec<PoseMatrix> {
    (0..n)
        .map(|k| PoseMatrix::from_parts(&Matrix3::identity(), &Vector3::new(k as f64, 0.0, 0.0)))
        .collect()
}

#[test]
fn trajectory_hand_computed() {
    let gt = line(3);
    // a similarity-transformed copy scores zero
    let sim = Similarity {
        scale: 2.5,
        rotation: *Rotation3::from_euler_angles(0.3, -0.2, 1.1).matrix(),
        translation: Vector3::new(1.0, -2.0, 0.5),
    };
    let moved: Vec<PoseMatrix> = gt.iter().map(|p| sim.apply_pose(p)).collect();
    let (m, _) = metric_trajectory(&moved, &gt).unwrap();
    assert!(m.ate < 1e-12 && m.rpe_t < 1e-12 && m.rpe_r < 1e-6);

    // shifting the middle pose by 0.3 along y: two relative motions are off
    // by 0.3 each, and the absolute error is 0.3 at one of three poses
    let mut off = gt.clone();
    off[1] = PoseMatrix::from_parts(&Matrix3::identity(), &Vector3::new(1.0, 0.3, 0.0));
    let m = trajectory_errors(&off, &gt, &Similarity::identity()).unwrap();
    assert!((m.ate - (0.09f64 / 3.0).sqrt()).abs() < 1e-15);
    assert!((m.rpe_t - 0.3).abs() < 1e-15);
    assert_eq!(m.rpe_r, 0.0);
    assert!(metric_trajectory(&gt[..2], &gt).is_err());
}

#[test]
fn fov_hand_computed() {
    // focal giving a 60° horizontal field of view at width 100
    let f60 = 50.0 / 30f64.to_radians().tan();
    let f50 = 50.0 / 25f64.to_radians().tan();
    assert!((metric_fov(1.0, f60, 100, f50).unwrap() - 0.2).abs() < 1e-12);
    assert!((metric_fov(1.0, f50, 100, f60).unwrap() - 1.0 / 6.0).abs() < 1e-12);
    assert!(metric_fov(0.5, 2.0 * f60, 100, f60).unwrap() < 1e-15);
}
