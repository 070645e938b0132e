//! Objective and gradient contracts of the optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recon_core::optimizer::{run_gradcheck, GradcheckConfig};
use recon_core::synth::{corrupt_depth, render_scene};
use recon_core::{
    optimize, CorruptionSpec, DepthMap, FreezeFlags, ImageBuffer, LossWeights, LwlrConfig, OptimizeConfig, ParamGroup,
    ParamVector, Problem, SceneSpec, SequenceInput,
};

fn small_scene() -> SceneSpec {
    let mut s = SceneSpec::default();
    s.width = 16;
    s.height = 12;
    s.focal = 15.0;
    s.supersample = 1;
    s.trajectory.arc_frames = 4;
    s
}

fn frames(scene: &SceneSpec, seed: u64) -> (Vec<ImageBuffer>, Vec<DepthMap>) {
    let n = scene.frame_count();
    let (imgs, gts): (Vec<_>, Vec<_>) = (0..n).map(|f| render_scene(scene, f).unwrap()).unzip();
    let medians: Vec<f64> = gts.iter().map(|d| d.median().unwrap()).collect();
    let spec = CorruptionSpec::random(&medians, seed);
    let depths = (0..n).map(|f| corrupt_depth(&gts[f], &spec, f).unwrap()).collect();
    (imgs, depths)
}

fn perturbed_problem(seed: u64) -> (Problem, ParamVector) {
    let scene = small_scene();
    let (imgs, depths) = frames(&scene, seed);
    let problem = Problem::new(imgs, depths, 9, &LwlrConfig::for_grid(16, 12, 9)).unwrap();
    let mut params = ParamVector::initial(problem.layout());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in params.values_mut() {
        *v += rng.random_range(-0.02..0.02);
    }
    (problem, params)
}

const PAIRS: [(usize, usize); 5] = [(0, 1), (1, 0), (1, 2), (3, 2), (2, 0)];

#[test]
fn default_gradcheck_passes() {
    let report = run_gradcheck(&GradcheckConfig::default()).unwrap();
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.max_rel_error.len(), ParamGroup::ALL.len());
}

#[test]
fn broken_derivative_is_caught() {
    for group in ParamGroup::ALL {
        let cfg = GradcheckConfig {
            instances: 2,
            sabotage: Some((group, 1.01)),
            ..Default::default()
        };
        let report = run_gradcheck(&cfg).unwrap();
        assert!(!report.passed(), "scaling the {} gradient went unnoticed", group.name());
        assert!(report.max_rel_error[&group] > cfg.tolerance);
    }
}

#[test]
fn fused_pass_reports_the_composed_loss() {
    for seed in 0..3 {
        let (problem, params) = perturbed_problem(seed);
        let w = LossWeights::new(2.0, 0.5, 0.01).unwrap();
        let composed = problem.evaluate(&params, &PAIRS, &w).unwrap();
        let (fused, _) = problem
            .compute_gradients(&params, &PAIRS, &w, &FreezeFlags::default())
            .unwrap();
        for (a, b) in [
            (composed.loss.pc, fused.loss.pc),
            (composed.loss.gc, fused.loss.gc),
            (composed.loss.regu, fused.loss.regu),
            (composed.loss.total, fused.loss.total),
        ] {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12), "{a} vs {b}");
        }
        assert_eq!(composed.pairs, fused.pairs);
    }
}

#[test]
fn zero_weights_give_zero_gradient() {
    let (problem, params) = perturbed_problem(4);
    let w = LossWeights::new(0.0, 0.0, 0.0).unwrap();
    let (_, g) = problem.compute_gradients(&params, &PAIRS, &w, &FreezeFlags::default()).unwrap();
    assert!(g.iter().all(|v| *v == 0.0));
}

#[test]
fn frozen_groups_have_zero_gradient() {
    let (problem, params) = perturbed_problem(5);
    let w = LossWeights::new(2.0, 1.0, 0.1).unwrap();
    let freeze = FreezeFlags { poses: true, intrinsics: true, omega: true };
    let (_, g) = problem.compute_gradients(&params, &PAIRS, &w, &freeze).unwrap();
    let layout = problem.layout();
    for (k, v) in g.iter().enumerate() {
        match layout.group(k) {
            ParamGroup::Alpha | ParamGroup::Beta => {}
            other => assert_eq!(*v, 0.0, "{} entry {k}", other.name()),
        }
    }
    assert!(g.iter().any(|v| *v != 0.0));
}

#[test]
fn duplicated_frames_are_a_zero_loss_fixed_point() {
    let scene = small_scene();
    let (img, gt) = render_scene(&scene, 1).unwrap();
    let da = gt.with_stage(recon_core::DepthStage::AffineInvariant);
    let imgs = vec![img.clone(), img];
    let depths = vec![da.clone(), da];
    let problem = Problem::new(imgs.clone(), depths.clone(), 9, &LwlrConfig::for_grid(16, 12, 9)).unwrap();
    let params = ParamVector::initial(problem.layout());
    let w = LossWeights::new(2.0, 0.5, 0.01).unwrap();
    let eval = problem.evaluate(&params, &[(0, 1), (1, 0)], &w).unwrap();
    assert_eq!((eval.loss.pc, eval.loss.gc, eval.loss.regu), (0.0, 0.0, 0.0));

    let cfg = OptimizeConfig {
        anchors: 9,
        schedule_scale: 0.001,
        ..Default::default()
    };
    let input = SequenceInput { images: &imgs, depths: &depths, fixed_poses: None, fixed_focal: None };
    let rec = optimize(input, &cfg).unwrap();
    let first = rec.trace[0].loss;
    assert_eq!((first.pc, first.gc, first.regu, first.total), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn optimization_is_deterministic() {
    let scene = small_scene();
    let (imgs, depths) = frames(&scene, 9);
    let cfg = OptimizeConfig {
        anchors: 9,
        schedule_scale: 0.02,
        downsample: false,
        ..Default::default()
    };
    let run = || {
        optimize(SequenceInput { images: &imgs, depths: &depths, fixed_poses: None, fixed_focal: None }, &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.params.values(), b.params.values());
    assert_eq!(a.trace, b.trace);
    let other = optimize(
        SequenceInput { images: &imgs, depths: &depths, fixed_poses: None, fixed_focal: None },
        &OptimizeConfig { seed: cfg.seed + 1, ..cfg.clone() },
    )
    .unwrap();
    assert_ne!(a.params.values(), other.params.values());
}

#[test]
fn optimization_reduces_the_loss() {
    let scene = small_scene();
    let (imgs, depths) = frames(&scene, 3);
    let cfg = OptimizeConfig {
        anchors: 9,
        schedule_scale: 0.1,
        downsample: false,
        ..Default::default()
    };
    let rec = optimize(SequenceInput { images: &imgs, depths: &depths, fixed_poses: None, fixed_focal: None }, &cfg).unwrap();
    let local: Vec<_> = rec.trace.iter().filter(|r| r.stage == recon_core::optimizer::Stage::Local).collect();
    let head: f64 = local[..10].iter().map(|r| r.loss.total).sum();
    let tail: f64 = local[local.len() - 10..].iter().map(|r| r.loss.total).sum();
    assert!(tail < 0.5 * head, "local stage loss {head} -> {tail}");
}
