//! Frame downsampling and keyframe-pair sampling schedules.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ReconError, Result};
use crate::geometry::PoseMatrix;
use crate::raster::ImageBuffer;

const THUMB_W: usize = 32;
const THUMB_H: usize = 24;
/// How many frames ahead of the current pivot the coarse downsampling looks.
pub const LOOKAHEAD: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Temporal neighbourhood size of the local schedule.
    pub k: usize,
    /// Angle threshold of the global schedule (radians).
    pub phi: f64,
    /// Similarity threshold of frame downsampling.
    pub sigma: f64,
    pub refs_per_step: usize,
    /// Optimization steps between global-schedule refreshes.
    pub refresh_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            k: 6,
            phi: std::f64::consts::FRAC_PI_4,
            sigma: 0.85,
            refs_per_step: 50,
            refresh_every: 100,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(ReconError::invalid("neighbourhood size k must be at least 1"));
        }
        if !(self.phi > 0.0 && self.phi < std::f64::consts::PI) {
            return Err(ReconError::invalid("angle threshold must lie in (0, π)"));
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(ReconError::invalid("similarity threshold must lie in (0, 1]"));
        }
        if self.refs_per_step == 0 || self.refresh_every == 0 {
            return Err(ReconError::invalid("step counts must be positive"));
        }
        Ok(())
    }
}

/// Normalized keyframe weights for every reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeSchedule {
    /// `candidates[i]` lists `(j, weight)` with positive weights summing to 1;
    /// empty when frame `i` is isolated.
    pub candidates: Vec<Vec<(usize, f64)>>,
}

impl KeyframeSchedule {
    pub fn frame_count(&self) -> usize {
        self.candidates.len()
    }

    /// Weight of keyframe `j` for reference `i`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.candidates[i]
            .iter()
            .find(|(c, _)| *c == j)
            .map_or(0.0, |(_, w)| *w)
    }

    fn from_raw(raw: Vec<Vec<f64>>) -> Self {
        let candidates = raw
            .into_iter()
            .map(|row| {
                let sum: f64 = row.iter().sum();
                if sum <= 0.0 {
                    return Vec::new();
                }
                row.iter()
                    .enumerate()
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(j, w)| (j, w / sum))
                    .collect()
            })
            .collect();
        Self { candidates }
    }
}

fn thumbnail(img: &ImageBuffer) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let span = |k: usize, n: usize, len: usize| {
        let lo = k * len / n;
        let hi = ((k + 1) * len / n).max(lo + 1).min(len);
        (lo.min(len - 1), hi)
    };
    let mut out = Vec::with_capacity(THUMB_W * THUMB_H);
    for ty in 0..THUMB_H {
        let (y0, y1) = span(ty, THUMB_H, h);
        for tx in 0..THUMB_W {
            let (x0, x1) = span(tx, THUMB_W, w);
            let mut acc = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    acc += img.luma(x, y);
                }
            }
            out.push(acc / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    out
}

fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    const FLAT: f64 = 1e-18;
    match (saa <= FLAT, sbb <= FLAT) {
        (true, true) => {
            if (ma - mb).abs() < 1e-12 {
                1.0
            } else {
                0.0
            }
        }
        (true, false) | (false, true) => 0.0,
        _ => sab / (saa * sbb).sqrt(),
    }
}

/// Zero-mean normalized cross-correlation of 32×24 grayscale thumbnails.
pub fn frame_similarity(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    ncc(&thumbnail(a), &thumbnail(b))
}

/// Two-stage downsampling: a coarse walk that jumps to the first frame whose
/// similarity to the current pivot drops below `sigma`, then up to three
/// evenly spaced frames between consecutive coarse picks.
pub fn downsample_frames(frames: &[ImageBuffer], cfg: &SamplerConfig) -> Result<Vec<usize>> {
    if frames.is_empty() {
        return Err(ReconError::invalid("no frames to downsample"));
    }
    let n = frames.len();
    let thumbs: Vec<Vec<f64>> = frames.iter().map(thumbnail).collect();
    let mut coarse = vec![0usize];
    let mut pivot = 0usize;
    while pivot + 1 < n {
        let end = (pivot + LOOKAHEAD).min(n - 1);
        let drop = (pivot + 1..=end).find(|&j| ncc(&thumbs[pivot], &thumbs[j]) < cfg.sigma);
        // nothing dissimilar in reach: the window end becomes the pivot, so
        // the last frame is always kept
        pivot = drop.unwrap_or(end);
        coarse.push(pivot);
    }
    let mut out = coarse.clone();
    for pair in coarse.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let gap = b - a;
        let count = 3.min(gap.saturating_sub(1));
        for k in 1..=count {
            out.push(a + ((gap * k) as f64 / (count + 1) as f64).round() as usize);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Indices of the `k` temporally nearest frames to `i` (ties go to the earlier frame).
fn nearest(i: usize, frame_count: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..frame_count).filter(|&j| j != i).collect();
    others.sort_by_key(|&j| (j.abs_diff(i), j));
    others.truncate(k);
    others
}

fn local_raw(frame_count: usize, k: usize) -> Vec<Vec<f64>> {
    (0..frame_count)
        .map(|i| {
            let mut row = vec![0.0; frame_count];
            for j in nearest(i, frame_count, k) {
                row[j] = 1.0 / k as f64;
            }
            row
        })
        .collect()
}

/// Uniform weight `1/k` over the `k` temporally nearest frames.
pub fn local_probabilities(frame_count: usize, k: usize) -> Result<KeyframeSchedule> {
    if frame_count < 2 {
        return Err(ReconError::invalid("keyframe sampling needs at least two frames"));
    }
    if k == 0 {
        return Err(ReconError::invalid("k must be at least 1"));
    }
    // built directly so every weight is exactly `1/k` (or `1/(P−1)` when
    // fewer than `k` other frames exist)
    let candidates = (0..frame_count)
        .map(|i| {
            let near = nearest(i, frame_count, k);
            let w = 1.0 / near.len() as f64;
            let mut row: Vec<(usize, f64)> = near.into_iter().map(|j| (j, w)).collect();
            row.sort_unstable_by_key(|c| c.0);
            row
        })
        .collect();
    Ok(KeyframeSchedule { candidates })
}

/// Rotation angle between two camera orientations, in `[0, π]`.
pub fn relative_angle(a: &PoseMatrix, b: &PoseMatrix) -> f64 {
    let r = a.rotation().transpose() * b.rotation();
    ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Tent over the relative angle: rises linearly to `1/φ` at `θ = φ` and
/// falls back to zero at `2φ`.
pub fn angle_tent(theta: f64, phi: f64) -> f64 {
    if theta > 0.0 && theta <= phi {
        theta / (phi * phi)
    } else if theta > phi && theta < 2.0 * phi {
        (2.0 * phi - theta) / (phi * phi)
    } else {
        0.0
    }
}

/// Unnormalized global weights `(p_l + tent(θ_ij)) / 2`.
pub fn global_raw_weights(poses: &[PoseMatrix], k: usize, phi: f64) -> Vec<Vec<f64>> {
    let n = poses.len();
    let local = local_raw(n, k);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        (local[i][j] + angle_tent(relative_angle(&poses[i], &poses[j]), phi)) / 2.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Global schedule from current poses; references whose raw weights are all
/// zero fall back to the local schedule.
pub fn global_probabilities(poses: &[PoseMatrix], cfg: &SamplerConfig) -> Result<KeyframeSchedule> {
    cfg.validate()?;
    let n = poses.len();
    if n < 2 {
        return Err(ReconError::invalid("keyframe sampling needs at least two frames"));
    }
    let mut raw = global_raw_weights(poses, cfg.k, cfg.phi);
    let local = local_raw(n, cfg.k);
    for (row, fallback) in raw.iter_mut().zip(local) {
        if row.iter().all(|w| *w <= 0.0) {
            *row = fallback;
        }
    }
    Ok(KeyframeSchedule::from_raw(raw))
}

/// Draws `refs_per_step` distinct reference frames (all of them when fewer
/// exist) and one keyframe for each according to the schedule.
pub fn sample_pairs<R: Rng + ?Sized>(
    schedule: &KeyframeSchedule,
    refs_per_step: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let n = schedule.frame_count();
    if n < 2 {
        return Err(ReconError::invalid("keyframe sampling needs at least two frames"));
    }
    let refs = rand::seq::index::sample(rng, n, refs_per_step.min(n));
    let mut pairs = Vec::with_capacity(refs.len());
    for i in refs.iter() {
        let cands = &schedule.candidates[i];
        if cands.is_empty() {
            continue;
        }
        let dist = WeightedIndex::new(cands.iter().map(|(_, w)| *w))
            .map_err(|e| ReconError::invalid(format!("bad keyframe weights: {e}")))?;
        pairs.push((i, cands[dist.sample(rng)].0));
    }
    Ok(pairs)
}
