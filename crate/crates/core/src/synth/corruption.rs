use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ReconError, Result};
use crate::raster::{DepthMap, DepthStage};

/// Low-frequency multiplicative field `1 + amplitude · sin(·) · cos(·)` over
/// normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothField {
    pub amplitude: f64,
    pub seed: u64,
}

impl SmoothField {
    fn factor(&self, frame: usize, u: f64, v: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(frame as u64));
        let (fx, fy) = (rng.random_range(0.5..1.0), rng.random_range(0.5..1.0));
        let (px, py) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let tau = std::f64::consts::TAU;
        1.0 + self.amplitude * (tau * (fx * u + px)).sin() * (tau * (fy * v + py)).cos()
    }
}

/// Per-frame affine distortion applied to ground-truth depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub field: Option<SmoothField>,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn identity(frames: usize) -> Self {
        Self {
            alpha: vec![1.0; frames],
            beta: vec![0.0; frames],
            field: None,
            seed: 0,
        }
    }

    /// `α*` log-uniform in `[0.5, 2]`, `β*` uniform in `±0.2 · median_i`.
    pub fn random(medians: &[f64], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut alpha = Vec::with_capacity(medians.len());
        let mut beta = Vec::with_capacity(medians.len());
        for m in medians {
            alpha.push(rng.random_range(0.5f64.ln()..=2f64.ln()).exp());
            beta.push(rng.random_range(-0.2..=0.2) * m);
        }
        Self {
            alpha,
            beta,
            field: None,
            seed,
        }
    }

    pub fn frames(&self) -> usize {
        self.alpha.len()
    }
}

/// `d ↦ α*·m(p)·d + β*` on valid pixels, tagged affine-invariant.
pub fn corrupt_depth(gt: &DepthMap, spec: &CorruptionSpec, frame: usize) -> Result<DepthMap> {
    if spec.alpha.len() != spec.beta.len() || frame >= spec.alpha.len() {
        return Err(ReconError::invalid(format!("corruption spec has no entry for frame {frame}")));
    }
    let (a, b) = (spec.alpha[frame], spec.beta[frame]);
    if !(a > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(ReconError::invalid("corruption scale must be positive and finite"));
    }
    let (w, h) = (gt.width(), gt.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            if !gt.is_valid(x, y) {
                out.push(f64::NAN);
                continue;
            }
            let m = spec
                .field
                .map_or(1.0, |f| f.factor(frame, x as f64 / w as f64, y as f64 / h as f64));
            let v = a * m * gt.get(x, y) + b;
            if !(v > 0.0) {
                return Err(ReconError::invalid(format!(
                    "corruption makes depth non-positive at ({x}, {y}) of frame {frame}"
                )));
            }
            out.push(v);
        }
    }
    DepthMap::new(w, h, out, DepthStage::AffineInvariant)
}
