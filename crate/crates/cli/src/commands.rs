//! The four subcommands as library functions.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use recon_core::fusion::{fuse_frames, interpolate_dense, TRUNCATION_VOXELS};
use recon_core::io::{
    read_json, read_pfm_depth, read_ply, read_trajectory, write_image, write_json, write_pfm_depth, write_ply,
    write_trajectory,
};
use recon_core::optimizer::{run_gradcheck, GradcheckConfig, GradcheckReport, TraceRow};
use recon_core::synth::{corrupt_depth, render_scene, SmoothField};
use recon_core::{
    optimize, CorruptionSpec, DepthStage, Intrinsics, PointCloud, SceneSpec, SequenceInput, Trajectory,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::{self, load_sequence, GtIntrinsics, SequenceBundle};
use crate::evaluate::{evaluate, EvalReport, Prediction};
use crate::manifest::write_manifest;

pub const OUT_DEPTH_DIR: &str = "depth";
pub const OUT_TRAJECTORY: &str = "trajectory.txt";
pub const OUT_DENSE_TRAJECTORY: &str = "trajectory_dense.txt";
pub const OUT_INTRINSICS: &str = "intrinsics.json";
pub const OUT_CLOUD: &str = "cloud.ply";
pub const OUT_FUSION: &str = "fusion.json";
pub const OUT_TRACE: &str = "loss_trace.csv";
pub const OUT_METRICS: &str = "metrics.json";
pub const OUT_MANIFEST: &str = "manifest.json";

/// Recovered camera model as written to `intrinsics.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsRecord {
    pub delta: f64,
    pub f0: f64,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub fov_x_deg: f64,
}

impl From<&Intrinsics> for IntrinsicsRecord {
    fn from(k: &Intrinsics) -> Self {
        Self {
            delta: k.delta,
            f0: k.f0,
            focal: k.focal(),
            cx: k.cx(),
            cy: k.cy(),
            width: k.width,
            height: k.height,
            fov_x_deg: k.fov_x().to_degrees(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionRecord {
    pub voxel_size: f64,
    pub truncation: f64,
    pub points: usize,
}

#[derive(Serialize)]
struct TraceCsvRow {
    iteration: usize,
    stage: &'static str,
    pc: f64,
    gc: f64,
    regu: f64,
    total: f64,
}

fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in trace {
        w.serialize(TraceCsvRow {
            iteration: r.iteration,
            stage: r.stage.name(),
            pc: r.loss.pc,
            gc: r.loss.gc,
            regu: r.loss.regu,
            total: r.loss.total,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ReconstructSummary {
    pub selected: Vec<usize>,
    pub intrinsics: Intrinsics,
    pub cloud_points: usize,
    pub rejected_steps: usize,
    pub report: Option<EvalReport>,
    pub seconds: f64,
}

/// Optimizes, fuses and writes every artifact of a run into `cfg.output`.
pub fn cmd_reconstruct(cfg: &RunConfig) -> Result<ReconstructSummary> {
    let start = Instant::now();
    let bundle = load_sequence(&cfg.input)?;
    let opt = &cfg.settings.optimize;
    log::info!("loaded {} frames of {}x{}", bundle.len(), bundle.width(), bundle.height());

    if opt.freeze.poses && bundle.gt.poses.is_none() {
        bail!("--freeze-poses needs ground-truth poses in {}", cfg.input.join(dataset::GT_POSES).display());
    }
    let fixed_focal = bundle.gt.intrinsics.map(|k| k.fx);
    if opt.freeze.intrinsics && fixed_focal.is_none() {
        log::warn!("intrinsics frozen without ground truth; the initial focal is kept");
    }
    let rec = optimize(
        SequenceInput {
            images: &bundle.images,
            depths: &bundle.depths,
            fixed_poses: bundle.gt.poses.as_deref(),
            fixed_focal,
        },
        opt,
    )?;
    log::info!(
        "optimized {} of {} frames ({} steps rejected)",
        rec.selected.len(),
        bundle.len(),
        rec.rejected_steps
    );

    let out = &cfg.output;
    fs::create_dir_all(out.join(OUT_DEPTH_DIR)).with_context(|| format!("creating {}", out.display()))?;
    for (&f, d) in rec.selected.iter().zip(&rec.depths) {
        write_pfm_depth(&out.join(OUT_DEPTH_DIR).join(format!("{}.pfm", bundle.stems[f])), d)?;
    }

    // frozen poses are echoed from the input file so the output matches it
    // text for text
    let trajectory = match (&bundle.gt.trajectory, opt.freeze.poses) {
        (Some(gt), true) => Trajectory {
            entries: rec.selected.iter().map(|&f| gt.entries[f]).collect(),
        },
        _ => Trajectory::from_poses(&rec.selected, &rec.poses)?,
    };
    write_trajectory(&out.join(OUT_TRAJECTORY), &trajectory)?;
    if cfg.settings.export_dense_trajectory {
        let dense = interpolate_dense(&rec.selected, &rec.poses, bundle.len())?;
        let all: Vec<usize> = (0..bundle.len()).collect();
        write_trajectory(&out.join(OUT_DENSE_TRAJECTORY), &Trajectory::from_poses(&all, &dense)?)?;
    }
    write_json(&out.join(OUT_INTRINSICS), &IntrinsicsRecord::from(&rec.intrinsics))?;

    let (cloud, voxel) = fuse_frames(&rec.depths, &rec.intrinsics, &rec.poses, cfg.settings.fusion.voxel_size)?;
    write_ply(&out.join(OUT_CLOUD), &cloud)?;
    write_json(
        &out.join(OUT_FUSION),
        &FusionRecord {
            voxel_size: voxel,
            truncation: TRUNCATION_VOXELS * voxel,
            points: cloud.len(),
        },
    )?;
    write_trace(&out.join(OUT_TRACE), &rec.trace)?;

    let report = if bundle.gt.is_empty() {
        None
    } else {
        let report = evaluate(
            &Prediction {
                frames: &rec.selected,
                depths: &rec.depths,
                poses: &rec.poses,
                intrinsics: &rec.intrinsics,
                cloud: &cloud,
                voxel_size: voxel,
            },
            &bundle.gt,
        )?;
        write_json(&out.join(OUT_METRICS), &report)?;
        Some(report)
    };
    write_manifest(&out.join(OUT_MANIFEST), "reconstruct", &cfg.settings, &cfg.input)?;
    Ok(ReconstructSummary {
        selected: rec.selected,
        intrinsics: rec.intrinsics,
        cloud_points: cloud.len(),
        rejected_steps: rec.rejected_steps,
        report,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Re-scores the artifacts in `output` against the ground truth in `input`.
pub fn cmd_eval(input: &Path, output: &Path) -> Result<EvalReport> {
    let bundle: SequenceBundle = load_sequence(input)?;
    if bundle.gt.is_empty() {
        bail!("{} carries no ground truth", input.display());
    }
    let traj = read_trajectory(&output.join(OUT_TRAJECTORY))?;
    let frames: Vec<usize> = traj.entries.iter().map(|e| e.index).collect();
    if let Some(&bad) = frames.iter().find(|&&f| f >= bundle.len()) {
        bail!("trajectory names frame {bad}, but the sequence has {} frames", bundle.len());
    }
    let depths = frames
        .iter()
        .map(|&f| {
            let path = output.join(OUT_DEPTH_DIR).join(format!("{}.pfm", bundle.stems[f]));
            read_pfm_depth(&path, DepthStage::ScaleConsistent).map_err(anyhow::Error::from)
        })
        .collect::<Result<Vec<_>>>()?;
    let rec: IntrinsicsRecord = read_json(&output.join(OUT_INTRINSICS))?;
    let intrinsics = Intrinsics::new(rec.delta, rec.f0, rec.width, rec.height)?;
    let fusion: FusionRecord = read_json(&output.join(OUT_FUSION))?;
    let cloud: PointCloud = read_ply(&output.join(OUT_CLOUD))?;
    evaluate(
        &Prediction {
            frames: &frames,
            depths: &depths,
            poses: &traj.poses(),
            intrinsics: &intrinsics,
            cloud: &cloud,
            voxel_size: fusion.voxel_size,
        },
        &bundle.gt,
    )
}

/// Synthetic dataset settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    pub scene: SceneSpec,
    pub seed: u64,
    /// Leave depth uncorrupted (`α* = 1`, `β* = 0`).
    pub identity: bool,
    pub field: Option<SmoothField>,
}

/// Renders the scene and writes a dataset in the `load_sequence` layout,
/// including ground truth and the applied corruption.
pub fn cmd_synth(opts: &SynthOptions, out: &Path) -> Result<CorruptionSpec> {
    opts.scene.validate()?;
    let n = opts.scene.frame_count();
    let mut renders = Vec::with_capacity(n);
    for f in 0..n {
        renders.push(render_scene(&opts.scene, f)?);
    }
    let mut spec = if opts.identity {
        CorruptionSpec::identity(n)
    } else {
        let medians = renders
            .iter()
            .map(|(_, d)| d.median().context("a frame has no valid depth"))
            .collect::<Result<Vec<_>>>()?;
        CorruptionSpec::random(&medians, opts.seed)
    };
    spec.field = opts.field;

    for dir in [dataset::RGB_DIR, dataset::DEPTH_DIR, dataset::GT_DEPTH_DIR] {
        fs::create_dir_all(out.join(dir)).with_context(|| format!("creating {}", out.join(dir).display()))?;
    }
    for (f, (img, gt)) in renders.iter().enumerate() {
        let stem = format!("{f:04}");
        write_image(&out.join(dataset::RGB_DIR).join(format!("{stem}.png")), img)?;
        write_pfm_depth(&out.join(dataset::DEPTH_DIR).join(format!("{stem}.pfm")), &corrupt_depth(gt, &spec, f)?)?;
        write_pfm_depth(&out.join(dataset::GT_DEPTH_DIR).join(format!("{stem}.pfm")), gt)?;
    }
    let poses = opts.scene.poses();
    let all: Vec<usize> = (0..n).collect();
    write_trajectory(&out.join(dataset::GT_POSES), &Trajectory::from_poses(&all, &poses)?)?;
    let k = opts.scene.intrinsics()?;
    write_json(
        &out.join(dataset::GT_INTRINSICS),
        &GtIntrinsics {
            fx: k.focal(),
            fy: k.focal(),
            cx: k.cx(),
            cy: k.cy(),
        },
    )?;
    write_json(&out.join(dataset::GT_DIR).join("corruption.json"), &spec)?;
    write_json(&out.join(dataset::GT_DIR).join("scene.json"), &opts.scene)?;
    Ok(spec)
}

pub fn cmd_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    Ok(run_gradcheck(cfg)?)
}
