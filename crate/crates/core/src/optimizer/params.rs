//! Flat parameter vector and its layout.
//!
//! Layout, in order:
//! - per frame `i`: `ρ_i` (with `α_i = softplus(ρ_i)`), `β_i`, then `M` anchor weights `ω_i`;
//! - per adjacent pair `k`: Euler angles `r_k` (3), translation `t_k` (3);
//! - the shared focal scalar `δ`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::alignment::GlobalAffine;
use crate::error::{ReconError, Result};
use crate::geometry::RelativePose;

/// Parameter groups, used for learning rates, freezing and gradient reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamGroup {
    Alpha,
    Beta,
    Omega,
    Rotation,
    Translation,
    Delta,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Alpha,
        ParamGroup::Beta,
        ParamGroup::Omega,
        ParamGroup::Rotation,
        ParamGroup::Translation,
        ParamGroup::Delta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Alpha => "alpha",
            ParamGroup::Beta => "beta",
            ParamGroup::Omega => "omega",
            ParamGroup::Rotation => "r",
            ParamGroup::Translation => "t",
            ParamGroup::Delta => "delta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub frames: usize,
    pub anchors: usize,
}

impl ParamLayout {
    pub fn new(frames: usize, anchors: usize) -> Result<Self> {
        if frames == 0 {
            return Err(ReconError::invalid("parameter layout needs at least one frame"));
        }
        Ok(Self { frames, anchors })
    }

    fn frame_stride(&self) -> usize {
        2 + self.anchors
    }

    /// `P·(2+M) + 6·(P−1) + 1`.
    pub fn len(&self) -> usize {
        self.frames * self.frame_stride() + 6 * (self.frames - 1) + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rho(&self, frame: usize) -> usize {
        frame * self.frame_stride()
    }

    pub fn beta(&self, frame: usize) -> usize {
        frame * self.frame_stride() + 1
    }

    pub fn omega(&self, frame: usize) -> Range<usize> {
        let start = frame * self.frame_stride() + 2;
        start..start + self.anchors
    }

    /// Start of the six pose entries of adjacent pair `k` (frame `k` to `k+1`).
    pub fn pose(&self, pair: usize) -> usize {
        self.frames * self.frame_stride() + 6 * pair
    }

    pub fn delta(&self) -> usize {
        self.len() - 1
    }

    pub fn group(&self, idx: usize) -> ParamGroup {
        let frame_block = self.frames * self.frame_stride();
        if idx + 1 == self.len() {
            ParamGroup::Delta
        } else if idx >= frame_block {
            if (idx - frame_block) % 6 < 3 {
                ParamGroup::Rotation
            } else {
                ParamGroup::Translation
            }
        } else {
            match idx % self.frame_stride() {
                0 => ParamGroup::Alpha,
                1 => ParamGroup::Beta,
                _ => ParamGroup::Omega,
            }
        }
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Rectification parameters of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameParams {
    pub alpha: f64,
    pub beta: f64,
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: ParamLayout,
    values: Vec<f64>,
}

impl ParamVector {
    /// `α = 1, β = 0, ω = 1, r = t = 0, δ = 1`.
    pub fn initial(layout: ParamLayout) -> Self {
        let mut values = vec![0.0; layout.len()];
        for i in 0..layout.frames {
            values[layout.rho(i)] = softplus_inverse(1.0);
            values[layout.omega(i)].fill(1.0);
        }
        values[layout.delta()] = 1.0;
        Self { layout, values }
    }

    pub fn from_raw(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(ReconError::invalid(format!(
                "layout expects {} parameters, got {}",
                layout.len(),
                values.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn pack(frames: &[FrameParams], relatives: &[RelativePose], delta: f64) -> Result<Self> {
        let anchors = frames.first().map_or(0, |f| f.omega.len());
        let layout = ParamLayout::new(frames.len(), anchors)?;
        if relatives.len() + 1 != frames.len() {
            return Err(ReconError::invalid("need one relative pose per adjacent frame pair"));
        }
        let mut values = Vec::with_capacity(layout.len());
        for f in frames {
            if f.omega.len() != anchors {
                return Err(ReconError::invalid("frames disagree on anchor count"));
            }
            if !(f.alpha > 0.0) {
                return Err(ReconError::invalid("global scale must be positive"));
            }
            values.push(softplus_inverse(f.alpha));
            values.push(f.beta);
            values.extend_from_slice(&f.omega);
        }
        for rp in relatives {
            values.extend_from_slice(&rp.r);
            values.extend_from_slice(&rp.t);
        }
        values.push(delta);
        Ok(Self { layout, values })
    }

    pub fn unpack(&self) -> (Vec<FrameParams>, Vec<RelativePose>, f64) {
        let frames = (0..self.layout.frames)
            .map(|i| FrameParams {
                alpha: self.alpha(i),
                beta: self.values[self.layout.beta(i)],
                omega: self.omega(i).to_vec(),
            })
            .collect();
        let rels = (0..self.layout.frames - 1).map(|k| self.relative(k)).collect();
        (frames, rels, self.delta())
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn alpha(&self, frame: usize) -> f64 {
        softplus(self.values[self.layout.rho(frame)])
    }

    pub fn global(&self, frame: usize) -> GlobalAffine {
        GlobalAffine {
            alpha: self.alpha(frame),
            beta: self.values[self.layout.beta(frame)],
        }
    }

    pub fn omega(&self, frame: usize) -> &[f64] {
        &self.values[self.layout.omega(frame)]
    }

    pub fn relative(&self, pair: usize) -> RelativePose {
        let s = self.layout.pose(pair);
        let v = &self.values[s..s + 6];
        RelativePose {
            r: [v[0], v[1], v[2]],
            t: [v[3], v[4], v[5]],
        }
    }

    pub fn delta(&self) -> f64 {
        self.values[self.layout.delta()]
    }

    pub fn set_delta(&mut self, delta: f64) {
        let i = self.layout.delta();
        self.values[i] = delta;
    }
}
