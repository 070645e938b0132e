//! Command-level behaviour on small synthetic datasets.

use std::fs;
use std::path::Path;

use recon_cli::cli::main_with_args;
use recon_cli::commands::{OUT_DENSE_TRAJECTORY, OUT_METRICS, OUT_TRAJECTORY};
use recon_cli::{cmd_eval, cmd_reconstruct, cmd_synth, load_sequence, EvalReport, RunConfig, Settings, SynthOptions};
use recon_core::io::{read_json, read_trajectory};

fn small_synth(seed: u64) -> SynthOptions {
    let mut o = SynthOptions {
        seed,
        ..Default::default()
    };
    o.scene.width = 24;
    o.scene.height = 18;
    o.scene.focal = 22.5;
    o.scene.supersample = 1;
    o.scene.trajectory.arc_frames = 5;
    o
}

fn quick_settings() -> Settings {
    let mut s = Settings::default();
    s.optimize.anchors = 9;
    s.optimize.schedule_scale = 0.02;
    s
}

fn run(input: &Path, output: &Path, settings: Settings) -> recon_cli::ReconstructSummary {
    cmd_reconstruct(&RunConfig::new(input, output, settings).unwrap()).unwrap()
}

#[test]
fn loading_matches_frames_to_depth_by_stem() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let mut o = small_synth(1);
    o.scene.trajectory.arc_frames = 3;
    cmd_synth(&o, &data).unwrap();
    let b = load_sequence(&data).unwrap();
    assert_eq!(b.len(), 3);
    assert_eq!(b.stems, ["0000", "0001", "0002"]);
    assert!(b.gt.poses.is_some() && b.gt.intrinsics.is_some() && b.gt.depths.is_some());

    fs::remove_file(data.join("depth/0001.pfm")).unwrap();
    let err = load_sequence(&data).unwrap_err().to_string();
    assert!(err.contains("'0001'"), "{err}");

    let empty = dir.path().join("empty");
    fs::create_dir_all(empty.join("rgb")).unwrap();
    assert!(load_sequence(&empty).is_err());
}

#[test]
fn synth_is_reproducible_and_identity_keeps_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    cmd_synth(&small_synth(3), &a).unwrap();
    cmd_synth(&small_synth(3), &b).unwrap();
    for sub in ["rgb/0002.png", "depth/0002.pfm", "gt/poses.txt", "gt/corruption.json"] {
        assert_eq!(fs::read(a.join(sub)).unwrap(), fs::read(b.join(sub)).unwrap(), "{sub}");
    }
    let identity = SynthOptions {
        identity: true,
        ..small_synth(3)
    };
    cmd_synth(&identity, &c).unwrap();
    for f in 0..5 {
        let name = format!("{f:04}.pfm");
        assert_eq!(
            fs::read(c.join("depth").join(&name)).unwrap(),
            fs::read(c.join("gt/depth").join(&name)).unwrap()
        );
    }
    assert_ne!(fs::read(a.join("depth/0000.pfm")).unwrap(), fs::read(a.join("gt/depth/0000.pfm")).unwrap());
}

#[test]
fn reconstruct_writes_every_artifact_and_all_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (data, out) = (dir.path().join("d"), dir.path().join("o"));
    cmd_synth(&small_synth(4), &data).unwrap();
    let mut s = quick_settings();
    s.export_dense_trajectory = true;
    let summary = run(&data, &out, s);
    for f in ["cloud.ply", "intrinsics.json", "fusion.json", "loss_trace.csv", "manifest.json", OUT_TRAJECTORY] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    for &f in &summary.selected {
        assert!(out.join(format!("depth/{f:04}.pfm")).is_file());
    }
    let report: EvalReport = read_json(&out.join(OUT_METRICS)).unwrap();
    let m = report.metrics;
    for (name, v) in [
        ("abs_rel", m.abs_rel),
        ("delta1", m.delta1),
        ("ate", m.ate),
        ("rpe_t", m.rpe_t),
        ("rpe_r", m.rpe_r),
        ("fov_abs_rel", m.fov_abs_rel),
        ("chamfer_l1", m.chamfer_l1),
        ("fscore", m.fscore),
    ] {
        assert!(v.is_some_and(f64::is_finite), "{name} missing");
    }
    let dense = read_trajectory(&out.join(OUT_DENSE_TRAJECTORY)).unwrap();
    assert_eq!(dense.entries.len(), 5);

    // re-scoring the files agrees with the in-memory evaluation up to the
    // precision of the written artifacts
    let again = cmd_eval(&data, &out).unwrap();
    let close = |a: Option<f64>, b: Option<f64>| (a.unwrap() - b.unwrap()).abs() <= 1e-5 * a.unwrap().abs().max(1e-3);
    assert!(close(again.metrics.abs_rel, m.abs_rel));
    assert!(close(again.metrics.ate, m.ate));
    assert_eq!(again.metrics.fov_abs_rel, m.fov_abs_rel);
}

#[test]
fn frozen_poses_echo_the_input_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let (data, out) = (dir.path().join("d"), dir.path().join("o"));
    cmd_synth(&small_synth(5), &data).unwrap();
    let mut s = quick_settings();
    s.optimize.freeze.poses = true;
    s.optimize.downsample = false;
    run(&data, &out, s);
    assert_eq!(
        fs::read(data.join("gt/poses.txt")).unwrap(),
        fs::read(out.join(OUT_TRAJECTORY)).unwrap()
    );
}

#[test]
fn freezing_poses_without_ground_truth_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (data, out) = (dir.path().join("d"), dir.path().join("o"));
    cmd_synth(&small_synth(6), &data).unwrap();
    fs::remove_file(data.join("gt/poses.txt")).unwrap();
    let mut s = quick_settings();
    s.optimize.freeze.poses = true;
    assert!(cmd_reconstruct(&RunConfig::new(&data, &out, s).unwrap()).is_err());
}

#[test]
fn frozen_intrinsics_keep_the_ground_truth_focal() {
    let dir = tempfile::tempdir().unwrap();
    let (data, out) = (dir.path().join("d"), dir.path().join("o"));
    cmd_synth(&small_synth(7), &data).unwrap();
    let mut s = quick_settings();
    s.optimize.freeze.intrinsics = true;
    let summary = run(&data, &out, s);
    assert!((summary.intrinsics.focal() - 22.5).abs() < 1e-12);
}

#[test]
fn sky_masks_are_applied() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let mut o = small_synth(8);
    o.scene.trajectory.arc_frames = 2;
    cmd_synth(&o, &data).unwrap();
    fs::create_dir_all(data.join("mask")).unwrap();
    for f in 0..2 {
        // top row is sky
        let mut m = recon_core::ImageBuffer::filled(24, 18, 1, 0.0).unwrap();
        let mut vals = m.data().to_vec();
        vals[..24].iter_mut().for_each(|v| *v = 1.0);
        m = recon_core::ImageBuffer::new(24, 18, 1, vals).unwrap();
        recon_core::io::write_image(&data.join(format!("mask/{f:04}.png")), &m).unwrap();
    }
    let b = load_sequence(&data).unwrap();
    assert!(b.sky_masked);
    assert!((0..24).all(|x| !b.depths[0].is_valid(x, 0)));
    assert!(b.depths[0].is_valid(0, 1));
    fs::remove_file(data.join("mask/0001.png")).unwrap();
    assert!(load_sequence(&data).is_err());
}

#[test]
fn binary_entry_point_exit_codes() {
    assert_eq!(main_with_args(["recon", "gradcheck", "--instances", "2"]), 0);
    assert_eq!(main_with_args(["recon", "gradcheck", "--instances", "2", "--sabotage", "omega=1.01"]), 1);
    assert_eq!(main_with_args(["recon", "reconstruct", "/no/such/dir", "/tmp/x"]), 1);
    assert_eq!(main_with_args(["recon", "reconstruct"]), 2);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"optimize": {"anchors": 9, "schedule_scale": 0.01}}"#).unwrap();
    let data = dir.path().join("d");
    let out = dir.path().join("o");
    assert_eq!(main_with_args(["recon", "synth", data.to_str().unwrap(), "--seed", "2"]), 0);
    assert_eq!(
        main_with_args([
            "recon",
            "reconstruct",
            data.to_str().unwrap(),
            out.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--preset",
            "outdoor",
            "--seed",
            "4",
        ]),
        0
    );
    let manifest: serde_json::Value = read_json(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["settings"]["optimize"]["preset"], "outdoor");
    assert_eq!(manifest["settings"]["optimize"]["anchors"], 9);
    let report = dir.path().join("r.json");
    assert_eq!(
        main_with_args(["recon", "eval", data.to_str().unwrap(), out.to_str().unwrap(), "--report", report.to_str().unwrap()]),
        0
    );
    assert!(report.is_file());
}
