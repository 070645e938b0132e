//! Central finite-difference check of [`Problem::compute_gradients`] against
//! [`Problem::evaluate`] on small random instances.
//!
//! Both the L1 terms and bilinear sampling are only piecewise smooth, so an
//! instance is redrawn when any quantity sits within a margin of a kink: a
//! warped coordinate near a pixel grid line or the image border, a color or
//! depth residual near zero, an anchor weight near 1, or a warped depth near
//! the validity threshold.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{FreezeFlags, Problem};
use super::params::{softplus_inverse, ParamGroup, ParamVector};
use crate::alignment::LwlrConfig;
use crate::error::Result;
use crate::geometry::{sample_depth, sample_image, PixelCoord};
use crate::losses::{warp_pair, LossWeights};
use crate::raster::{DepthMap, DepthStage, ImageBuffer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckConfig {
    pub instances: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub anchors: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Scales the analytic gradient of one group; a negative control only.
    pub sabotage: Option<(ParamGroup, f64)>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            instances: 10,
            seed: 0,
            width: 8,
            height: 6,
            anchors: 25,
            step: 1e-5,
            tolerance: 1e-4,
            sabotage: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    /// Worst relative error per parameter group.
    pub max_rel_error: BTreeMap<ParamGroup, f64>,
    pub instances: usize,
    /// Instances redrawn for sitting near a kink.
    pub redrawn: usize,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        ParamGroup::ALL
            .iter()
            .all(|g| self.max_rel_error.get(g).is_some_and(|e| *e < self.tolerance))
    }
}

/// `|a − b| / max(|a|, |b|, 1e-7)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

const PAIRS: [(usize, usize); 2] = [(0, 1), (1, 0)];
const WEIGHTS: LossWeights = LossWeights {
    pc: 2.0,
    gc: 0.5,
    regu: 0.1,
};

struct Instance {
    problem: Problem,
    params: ParamVector,
}

fn smooth_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageBuffer {
    let mut data = Vec::with_capacity(w * h * 3);
    let coef: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
            for c in 0..3 {
                let k = &coef[c * 4..c * 4 + 4];
                let s = (k[0] * 5.0 * u + k[1] * 4.0 * v + k[2]).sin() * (k[3] * 3.0 * (u - v)).cos();
                data.push(0.5 + 0.4 * s + 0.05 * rng.random_range(-1.0..1.0));
            }
        }
    }
    ImageBuffer::new(w, h, 3, data).expect("values stay in [0, 1]")
}

fn draw(rng: &mut ChaCha8Rng, cfg: &GradcheckConfig) -> Result<Instance> {
    let (w, h) = (cfg.width, cfg.height);
    let images = vec![smooth_image(rng, w, h), smooth_image(rng, w, h)];
    let depths = (0..2)
        .map(|_| {
            let vals = (0..w * h).map(|_| rng.random_range(1.5..2.5)).collect();
            DepthMap::new(w, h, vals, DepthStage::AffineInvariant)
        })
        .collect::<Result<Vec<_>>>()?;
    let problem = Problem::new(images, depths, cfg.anchors, &LwlrConfig::for_grid(w, h, cfg.anchors))?;
    let mut params = ParamVector::initial(problem.layout());
    let layout = problem.layout();
    let vals = params.values_mut();
    for f in 0..2 {
        vals[layout.rho(f)] = softplus_inverse(rng.random_range(0.8..1.2));
        vals[layout.beta(f)] = rng.random_range(-0.1..0.1);
        for k in layout.omega(f) {
            let mag = rng.random_range(0.05..0.25);
            vals[k] = if rng.random::<bool>() { 1.0 + mag } else { 1.0 - mag };
        }
    }
    let p = layout.pose(0);
    for d in 0..3 {
        vals[p + d] = rng.random_range(-0.04..0.04);
        vals[p + 3 + d] = rng.random_range(-0.05..0.05);
    }
    vals[layout.delta()] = rng.random_range(0.9..1.1);
    Ok(Instance { problem, params })
}

fn near_kink(inst: &Instance) -> Result<bool> {
    const COORD: f64 = 2e-3;
    const RESIDUAL: f64 = 2e-3;
    let p = &inst.problem;
    let intr = p.intrinsics(&inst.params)?;
    let poses = p.poses(&inst.params);
    let rect = [p.rectify(&inst.params, 0)?, p.rectify(&inst.params, 1)?];
    let (w, h) = (rect[0].width(), rect[0].height());
    for &(i, j) in &PAIRS {
        let pw = warp_pair(&rect[i], &rect[j], &intr, &poses[i], &poses[j], None);
        for (idx, wp) in pw.warps.iter().enumerate() {
            if !rect[i].validity()[idx] {
                continue;
            }
            let q = wp.coord;
            let grid = |c: f64| (c - c.round()).abs() < COORD;
            let border = |c: f64, len: usize| c.abs() < COORD || (c - (len - 1) as f64).abs() < COORD;
            if grid(q.u) || grid(q.v) || border(q.u, w) || border(q.v, h) || wp.depth.abs() < 1e-3 {
                return Ok(true);
            }
            if !pw.valid.flags[idx] {
                continue;
            }
            let (x, y) = (idx % w, idx / w);
            for c in 0..3 {
                let s = sample_image(&p.images()[j], q, c).expect("valid pixels are sampleable");
                if (p.images()[i].get(x, y, c) - s.value).abs() < RESIDUAL {
                    return Ok(true);
                }
            }
            let a = sample_depth(&rect[j], PixelCoord::new(q.u, q.v)).expect("valid pixels are sampleable");
            if (a.value - wp.depth).abs() < RESIDUAL {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Runs the suite and reports the worst relative error per group.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut worst: BTreeMap<ParamGroup, f64> = BTreeMap::new();
    let mut redrawn = 0usize;
    for s in 0..cfg.instances {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(1_000_003).wrapping_add(s as u64));
        let inst = loop {
            let cand = draw(&mut rng, cfg)?;
            if near_kink(&cand)? {
                redrawn += 1;
                continue;
            }
            break cand;
        };
        let (_, mut grad) =
            inst.problem
                .compute_gradients(&inst.params, &PAIRS, &WEIGHTS, &FreezeFlags::default())?;
        let layout = inst.params.layout();
        if let Some((group, factor)) = cfg.sabotage {
            for (k, g) in grad.iter_mut().enumerate() {
                if layout.group(k) == group {
                    *g *= factor;
                }
            }
        }
        for (k, &analytic) in grad.iter().enumerate() {
            let mut plus = inst.params.clone();
            plus.values_mut()[k] += cfg.step;
            let mut minus = inst.params.clone();
            minus.values_mut()[k] -= cfg.step;
            let lp = inst.problem.evaluate(&plus, &PAIRS, &WEIGHTS)?.loss.total;
            let lm = inst.problem.evaluate(&minus, &PAIRS, &WEIGHTS)?.loss.total;
            let numeric = (lp - lm) / (2.0 * cfg.step);
            let e = relative_error(analytic, numeric);
            let slot = worst.entry(layout.group(k)).or_insert(0.0);
            *slot = slot.max(e);
        }
    }
    Ok(GradcheckReport {
        max_rel_error: worst,
        instances: cfg.instances,
        redrawn,
        tolerance: cfg.tolerance,
    })
}
