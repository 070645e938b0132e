//! Argument parsing and dispatch for the `recon` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};
use recon_core::optimizer::GradcheckConfig;
use recon_core::synth::SmoothField;
use recon_core::{ParamGroup, Preset, SceneSpec};

use crate::commands::{cmd_eval, cmd_gradcheck, cmd_reconstruct, cmd_synth, SynthOptions};
use crate::config::{RunConfig, Settings};

#[derive(Debug, Parser)]
#[command(name = "recon", version, about = "Pose-free scene reconstruction from affine-invariant depth maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a sequence and write depth, poses, intrinsics and a fused cloud.
    Reconstruct(ReconstructArgs),
    /// Render a synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Score existing reconstruction outputs against ground truth.
    Eval(EvalArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Sequence directory (rgb/, depth/, optional mask/ and gt/).
    pub input: PathBuf,
    /// Output directory; created if missing.
    pub output: PathBuf,
    /// JSON settings file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    /// Keep the focal at the ground-truth value (or its initial value).
    #[arg(long)]
    pub freeze_intrinsics: bool,
    /// Use the ground-truth poses and do not optimize them.
    #[arg(long)]
    pub freeze_poses: bool,
    /// Multiplier on both stages' iteration counts.
    #[arg(long)]
    pub schedule_scale: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub voxel_size: Option<f64>,
    /// Also write poses for frames dropped by downsampling.
    #[arg(long)]
    pub export_dense_trajectory: bool,
}

impl ReconstructArgs {
    pub fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        let o = &mut s.optimize;
        if let Some(p) = self.preset {
            o.preset = p;
        }
        o.freeze.intrinsics |= self.freeze_intrinsics;
        o.freeze.poses |= self.freeze_poses;
        if let Some(v) = self.schedule_scale {
            o.schedule_scale = v;
        }
        if let Some(v) = self.seed {
            o.seed = v;
        }
        if let Some(v) = self.voxel_size {
            s.fusion.voxel_size = Some(v);
        }
        s.export_dense_trajectory |= self.export_dense_trajectory;
        Ok(s)
    }
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: recon_core::ReconError| e.to_string())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset directory to create.
    pub output: PathBuf,
    /// Scene description (JSON); the built-in scene when absent.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Seed of the per-frame depth corruption.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write uncorrupted depth.
    #[arg(long)]
    pub identity: bool,
    /// Amplitude of a smooth multiplicative distortion field.
    #[arg(long)]
    pub field_amplitude: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Sequence directory with gt/.
    pub input: PathBuf,
    /// Output directory of a previous `reconstruct`.
    pub output: PathBuf,
    /// Write the report here instead of printing it.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 10)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Test fixture: scale one group's analytic gradient, e.g. `alpha=1.01`.
    #[arg(long, hide = true, value_parser = parse_sabotage)]
    pub sabotage: Option<(ParamGroup, f64)>,
}

fn parse_sabotage(s: &str) -> Result<(ParamGroup, f64), String> {
    let (name, factor) = s.split_once('=').ok_or("expected GROUP=FACTOR")?;
    let group = ParamGroup::ALL
        .into_iter()
        .find(|g| g.name() == name)
        .ok_or_else(|| format!("unknown parameter group '{name}'"))?;
    let factor = factor.parse::<f64>().map_err(|e| e.to_string())?;
    Ok((group, factor))
}

/// Runs a parsed command. `Ok(false)` means the command completed but its
/// check failed (gradcheck only).
pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Reconstruct(args) => {
            let cfg = RunConfig::new(&args.input, &args.output, args.settings()?)?;
            let summary = cmd_reconstruct(&cfg)?;
            println!(
                "reconstructed {} frames in {:.1} s; focal {:.3}; {} cloud points",
                summary.selected.len(),
                summary.seconds,
                summary.intrinsics.focal(),
                summary.cloud_points
            );
            if let Some(r) = &summary.report {
                println!("{}", serde_json::to_string_pretty(&r.metrics)?);
            }
            Ok(true)
        }
        Command::Synth(args) => {
            let scene: SceneSpec = match &args.scene {
                Some(path) => recon_core::io::read_json(path)?,
                None => SceneSpec::default(),
            };
            let opts = SynthOptions {
                scene,
                seed: args.seed,
                identity: args.identity,
                field: args.field_amplitude.map(|amplitude| SmoothField {
                    amplitude,
                    seed: args.seed,
                }),
            };
            let spec = cmd_synth(&opts, &args.output)?;
            println!("wrote {} frames to {}", spec.frames(), args.output.display());
            Ok(true)
        }
        Command::Eval(args) => {
            let report = cmd_eval(&args.input, &args.output)?;
            match &args.report {
                Some(path) => recon_core::io::write_json(path, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(true)
        }
        Command::Gradcheck(args) => {
            let cfg = GradcheckConfig {
                instances: args.instances,
                seed: args.seed,
                sabotage: args.sabotage,
                ..Default::default()
            };
            let report = cmd_gradcheck(&cfg)?;
            for (group, err) in &report.max_rel_error {
                println!("{:<6} max relative error {err:.3e}", group.name());
            }
            let ok = report.passed();
            println!(
                "{} ({} instances, tolerance {:e})",
                if ok { "PASS" } else { "FAIL" },
                report.instances,
                report.tolerance
            );
            Ok(ok)
        }
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli).map_err(|e| anyhow!(e)) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
