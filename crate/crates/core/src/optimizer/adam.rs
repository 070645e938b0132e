//! Bias-corrected adaptive-moment updates with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::objective::FreezeFlags;
use super::params::{ParamGroup, ParamLayout, ParamVector};
use crate::error::{ReconError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    /// Euler angles and translations.
    pub pose: f64,
    pub delta: f64,
    /// `α`, `β` and `ω`.
    pub depth: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            pose: 1e-3,
            delta: 1e-3,
            depth: 1e-2,
        }
    }
}

impl LearningRates {
    pub fn for_group(&self, g: ParamGroup) -> f64 {
        match g {
            ParamGroup::Rotation | ParamGroup::Translation => self.pose,
            ParamGroup::Delta => self.delta,
            ParamGroup::Alpha | ParamGroup::Beta | ParamGroup::Omega => self.depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub rates: LearningRates,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            rates: LearningRates::default(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    /// Per-parameter learning rate.
    pub lr: Vec<f64>,
    pub frozen: Vec<bool>,
    pub cfg: AdamConfig,
}

impl OptimState {
    pub fn new(layout: ParamLayout, cfg: AdamConfig, freeze: &FreezeFlags) -> Self {
        let n = layout.len();
        let groups: Vec<ParamGroup> = (0..n).map(|i| layout.group(i)).collect();
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr: groups.iter().map(|g| cfg.rates.for_group(*g)).collect(),
            frozen: groups.iter().map(|g| freeze.is_frozen(*g)).collect(),
            cfg,
        }
    }

    /// Halves every learning rate (divergence guard).
    pub fn halve_rates(&mut self) {
        for lr in &mut self.lr {
            *lr *= 0.5;
        }
    }
}

/// One AdamW step in place; frozen entries never move.
pub fn update_step(state: &mut OptimState, params: &mut ParamVector, grads: &[f64]) -> Result<()> {
    let n = params.values().len();
    if grads.len() != n || state.m.len() != n {
        return Err(ReconError::invalid("gradient length does not match the parameters"));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(ReconError::NonFiniteGradient(i));
    }
    let c = state.cfg;
    state.step += 1;
    let bc1 = 1.0 - c.beta1.powi(state.step as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step as i32);
    let values = params.values_mut();
    for i in 0..n {
        if state.frozen[i] {
            continue;
        }
        let g = grads[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        values[i] -= state.lr[i] * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * values[i]);
    }
    Ok(())
}
