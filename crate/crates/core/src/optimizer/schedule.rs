//! Two-stage schedule: local keyframe sampling first, then pose-aware global
//! sampling, followed by final rectification and pose chaining.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{update_step, AdamConfig, OptimState};
use super::objective::{FreezeFlags, Problem};
use super::params::ParamVector;
use crate::alignment::LwlrConfig;
use crate::error::{ReconError, Result};
use crate::geometry::{Intrinsics, PoseMatrix};
use crate::losses::{LossBreakdown, LossWeights};
use crate::raster::{DepthMap, ImageBuffer};
use crate::sampler::{
    downsample_frames, global_probabilities, local_probabilities, sample_pairs, KeyframeSchedule,
    SamplerConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Local,
    Global,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Local => "local",
            Stage::Global => "global",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Indoor,
    Outdoor,
}

impl std::str::FromStr for Preset {
    type Err = ReconError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "indoor" => Ok(Preset::Indoor),
            "outdoor" => Ok(Preset::Outdoor),
            other => Err(ReconError::invalid(format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub stage: Stage,
    pub iterations: usize,
    /// `(first iteration, weights)` in increasing order; the first entry starts at 0.
    pub weights: Vec<(usize, LossWeights)>,
    pub refs_per_step: usize,
}

impl StageSchedule {
    pub fn weights_at(&self, iteration: usize) -> LossWeights {
        self.weights
            .iter()
            .rev()
            .find(|(start, _)| *start <= iteration)
            .map_or(LossWeights::ZERO, |(_, w)| *w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.refs_per_step == 0 {
            return Err(ReconError::invalid("refs_per_step must be positive"));
        }
        if self.weights.first().is_none_or(|(s, _)| *s != 0) {
            return Err(ReconError::invalid("stage weights must start at iteration 0"));
        }
        if self.weights.windows(2).any(|p| p[0].0 >= p[1].0) {
            return Err(ReconError::invalid("stage weight breakpoints must increase"));
        }
        Ok(())
    }

    /// Default local and global stages; `scale` multiplies the iteration counts.
    pub fn preset(preset: Preset, scale: f64, refs_per_step: usize) -> Result<[StageSchedule; 2]> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(ReconError::invalid("schedule scale must be non-negative"));
        }
        let gc = |indoor: f64| match preset {
            Preset::Indoor => indoor,
            Preset::Outdoor => 0.001,
        };
        let it = |n: f64| (n * scale).round() as usize;
        let global_iters = it(4000.0);
        Ok([
            StageSchedule {
                stage: Stage::Local,
                iterations: it(2000.0),
                weights: vec![(0, LossWeights { pc: 2.0, gc: gc(0.5), regu: 0.01 })],
                refs_per_step,
            },
            StageSchedule {
                stage: Stage::Global,
                iterations: global_iters,
                weights: vec![
                    (0, LossWeights { pc: 2.0, gc: gc(1.0), regu: 0.1 }),
                    (global_iters / 2, LossWeights { pc: 2.0, gc: gc(0.1), regu: 0.1 }),
                ],
                refs_per_step,
            },
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub stage: Stage,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

/// Consecutive rejected steps tolerated before aborting.
pub const MAX_REJECTIONS: usize = 3;

/// Mutable state threaded through the stages.
pub struct RunState {
    pub params: ParamVector,
    pub optim: OptimState,
    pub rng: ChaCha8Rng,
    pub trace: Vec<TraceRow>,
    pub rejected: usize,
}

impl RunState {
    pub fn new(params: ParamVector, adam: AdamConfig, freeze: &FreezeFlags, seed: u64) -> Self {
        let optim = OptimState::new(params.layout(), adam, freeze);
        Self {
            params,
            optim,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: Vec::new(),
            rejected: 0,
        }
    }
}

fn recoverable(e: &ReconError) -> bool {
    matches!(
        e,
        ReconError::NonFiniteLoss(..) | ReconError::NonFiniteGradient(_) | ReconError::DegenerateInput(_)
    )
}

/// Runs one stage in place, appending one trace row per accepted step.
pub fn run_stage(
    problem: &Problem,
    run: &mut RunState,
    stage: &StageSchedule,
    sampler: &SamplerConfig,
    freeze: &FreezeFlags,
) -> Result<()> {
    stage.validate()?;
    sampler.validate()?;
    if stage.iterations == 0 {
        return Ok(());
    }
    let n = problem.frame_count();
    let mut schedule: KeyframeSchedule = local_probabilities(n, sampler.k)?;
    let offset = run.trace.last().map_or(0, |r| r.iteration + 1);
    let mut consecutive = 0usize;
    let mut it = 0usize;
    let mut last_good = (run.params.clone(), run.optim.clone());
    while it < stage.iterations {
        if stage.stage == Stage::Global && it.is_multiple_of(sampler.refresh_every) {
            schedule = global_probabilities(&problem.poses(&run.params), sampler)?;
        }
        let pairs = sample_pairs(&schedule, stage.refs_per_step, &mut run.rng)?;
        let w = stage.weights_at(it);
        let step = problem
            .compute_gradients(&run.params, &pairs, &w, freeze)
            .and_then(|(eval, grad)| {
                update_step(&mut run.optim, &mut run.params, &grad)?;
                Ok(eval)
            });
        match step {
            Ok(eval) => {
                consecutive = 0;
                run.trace.push(TraceRow {
                    iteration: offset + it,
                    stage: stage.stage,
                    loss: eval.loss,
                });
                last_good = (run.params.clone(), run.optim.clone());
                it += 1;
            }
            Err(e) if recoverable(&e) => {
                consecutive += 1;
                run.rejected += 1;
                log::warn!("rejected step {} of {} stage: {e}", it, stage.stage.name());
                if consecutive >= MAX_REJECTIONS {
                    return Err(ReconError::Diverged(format!(
                        "{MAX_REJECTIONS} consecutive rejected steps in the {} stage at iteration {}; last error: {e}",
                        stage.stage.name(),
                        offset + it
                    )));
                }
                run.params = last_good.0.clone();
                run.optim = last_good.1.clone();
                for _ in 0..consecutive {
                    run.optim.halve_rates();
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    pub anchors: usize,
    /// Defaults to [`LwlrConfig::for_grid`] when absent.
    pub lwlr: Option<LwlrConfig>,
    pub sampler: SamplerConfig,
    pub adam: AdamConfig,
    pub preset: Preset,
    pub schedule_scale: f64,
    pub seed: u64,
    pub freeze: FreezeFlags,
    pub downsample: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            anchors: 25,
            lwlr: None,
            sampler: SamplerConfig::default(),
            adam: AdamConfig::default(),
            preset: Preset::Indoor,
            schedule_scale: 1.0,
            seed: 0,
            freeze: FreezeFlags::default(),
            downsample: true,
        }
    }
}

/// Inputs of one reconstruction. Sky masks are expected to be applied to the
/// depth maps already.
#[derive(Debug, Clone, Copy)]
pub struct SequenceInput<'a> {
    pub images: &'a [ImageBuffer],
    pub depths: &'a [DepthMap],
    /// Camera-to-world poses used verbatim when poses are frozen.
    pub fixed_poses: Option<&'a [PoseMatrix]>,
    /// Focal length (pixels) used when intrinsics are frozen.
    pub fixed_focal: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Indices into the input sequence of the optimized frames.
    pub selected: Vec<usize>,
    pub depths: Vec<DepthMap>,
    pub intrinsics: Intrinsics,
    pub poses: Vec<PoseMatrix>,
    pub params: ParamVector,
    pub trace: Vec<TraceRow>,
    pub rejected_steps: usize,
}

/// Downsamples, optimizes both stages and returns rectified depths, the
/// shared intrinsics and camera-to-world poses of the selected frames.
pub fn optimize(input: SequenceInput<'_>, cfg: &OptimizeConfig) -> Result<Reconstruction> {
    let n = input.images.len();
    if n < 2 {
        return Err(ReconError::invalid("reconstruction needs at least two frames"));
    }
    if input.depths.len() != n {
        return Err(ReconError::invalid("need one depth map per frame"));
    }
    if cfg.freeze.poses && input.fixed_poses.is_none() {
        return Err(ReconError::invalid("freezing poses requires supplied poses"));
    }
    if let Some(p) = input.fixed_poses {
        if p.len() != n {
            return Err(ReconError::invalid("need one supplied pose per frame"));
        }
    }
    let mut selected = if cfg.downsample {
        downsample_frames(input.images, &cfg.sampler)?
    } else {
        (0..n).collect()
    };
    if selected.len() < 2 {
        log::warn!("downsampling kept a single frame; optimizing the full sequence instead");
        selected = (0..n).collect();
    }
    let images: Vec<ImageBuffer> = selected.iter().map(|&i| input.images[i].clone()).collect();
    let depths: Vec<DepthMap> = selected.iter().map(|&i| input.depths[i].clone()).collect();
    let (w, h) = (images[0].width(), images[0].height());
    let lwlr = cfg.lwlr.unwrap_or_else(|| LwlrConfig::for_grid(w, h, cfg.anchors));
    let mut problem = Problem::new(images, depths, cfg.anchors, &lwlr)?;
    let mut freeze = cfg.freeze;
    if cfg.freeze.poses {
        let poses = input.fixed_poses.unwrap();
        problem = problem.with_fixed_poses(selected.iter().map(|&i| poses[i]).collect())?;
    }
    let mut params = ParamVector::initial(problem.layout());
    if cfg.freeze.intrinsics {
        if let Some(focal) = input.fixed_focal {
            params.set_delta(focal / problem.f0());
        }
    }
    freeze.poses |= problem.has_fixed_poses();

    let mut run = RunState::new(params, cfg.adam, &freeze, cfg.seed);
    let stages = StageSchedule::preset(cfg.preset, cfg.schedule_scale, cfg.sampler.refs_per_step)?;
    for stage in &stages {
        run_stage(&problem, &mut run, stage, &cfg.sampler, &freeze)?;
    }
    let depths = (0..problem.frame_count())
        .map(|i| problem.rectify(&run.params, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Reconstruction {
        selected,
        depths,
        intrinsics: problem.intrinsics(&run.params)?,
        poses: problem.poses(&run.params),
        params: run.params,
        trace: run.trace,
        rejected_steps: run.rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_counts_and_weights() {
        let [local, global] = StageSchedule::preset(Preset::Indoor, 1.0, 50).unwrap();
        assert_eq!((local.iterations, global.iterations), (2000, 4000));
        assert_eq!(local.weights_at(1999), LossWeights { pc: 2.0, gc: 0.5, regu: 0.01 });
        assert_eq!(global.weights_at(1999).gc, 1.0);
        assert_eq!(global.weights_at(2000).gc, 0.1);
        let [l, g] = StageSchedule::preset(Preset::Outdoor, 0.1, 50).unwrap();
        assert_eq!((l.iterations, g.iterations), (200, 400));
        assert_eq!(l.weights_at(0).gc, 0.001);
        assert_eq!(g.weights_at(399).gc, 0.001);
        assert!(StageSchedule::preset(Preset::Indoor, -1.0, 50).is_err());
        assert_eq!("outdoor".parse::<Preset>().unwrap(), Preset::Outdoor);
    }

    #[test]
    fn schedule_validation() {
        let mut s = StageSchedule::preset(Preset::Indoor, 1.0, 50).unwrap()[1].clone();
        assert!(s.validate().is_ok());
        s.weights.swap(0, 1);
        assert!(s.validate().is_err());
    }
}
