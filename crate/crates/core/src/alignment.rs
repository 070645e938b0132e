//! Depth rectification: a global scale/shift followed by locally weighted
//! linear regression (LWLR) toward weighted anchor depths.
//!
//! For every evaluated location `(u, v)` the local fit solves the ridge
//! problem
//!
//! ```text
//! min_{s,θ}  Σ_t w_t (y_t − s·d_t − θ)² + λ θ²,   w_t = exp(−dist_t² / 2b²) / √(2π)
//! ```
//!
//! where `d_t` are anchor depths of the globally aligned map and
//! `y_t = ω_t · d_t` the weighted targets. The scale and shift maps are then
//! applied elementwise: `D = A ⊙ D^g + B`.

use serde::{Deserialize, Serialize};

use crate::error::{ReconError, Result};
use crate::raster::{DepthMap, DepthStage, EPS_DEPTH};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Per-frame global correction `D^g = α · D^a + β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalAffine {
    pub alpha: f64,
    pub beta: f64,
}

impl GlobalAffine {
    pub const IDENTITY: GlobalAffine = GlobalAffine {
        alpha: 1.0,
        beta: 0.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ReconError::invalid(format!("scale must be positive, got {alpha}")));
        }
        if !beta.is_finite() {
            return Err(ReconError::invalid("shift must be finite"));
        }
        Ok(Self { alpha, beta })
    }
}

/// Sparse anchors on a uniform grid over a globally aligned map.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub grid_side: usize,
    /// Integer pixel coordinates `(x, y)`.
    pub coords: Vec<(usize, usize)>,
    pub omega: Vec<f64>,
    /// Globally aligned depth at each anchor (meaningless where `valid` is false).
    pub depths: Vec<f64>,
    pub valid: Vec<bool>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Fit targets `ω_t · d_t`.
    pub fn targets(&self) -> Vec<f64> {
        self.omega
            .iter()
            .zip(&self.depths)
            .map(|(w, d)| w * d)
            .collect()
    }
}

/// Local regression settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LwlrConfig {
    /// Gaussian kernel bandwidth in pixels.
    pub bandwidth: f64,
    /// Ridge penalty on the local shift.
    pub lambda: f64,
    /// Spacing of exactly solved locations; the rest is bilinearly upsampled.
    pub stride: usize,
}

impl LwlrConfig {
    /// Defaults for a `width × height` frame with `m` anchors: bandwidth equal
    /// to the anchor spacing, `λ = 0.1`, stride 4.
    pub fn for_grid(width: usize, height: usize, m: usize) -> Self {
        let side = (m as f64).sqrt().max(1.0);
        Self {
            bandwidth: 0.5 * (width as f64 / side + height as f64 / side),
            lambda: 0.1,
            stride: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(ReconError::invalid("LWLR bandwidth must be positive"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(ReconError::invalid("LWLR ridge penalty must be non-negative"));
        }
        if self.stride == 0 {
            return Err(ReconError::invalid("LWLR stride must be at least 1"));
        }
        Ok(())
    }
}

/// Dense local scale (`A`) and shift (`B`) maps.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAffineMaps {
    pub width: usize,
    pub height: usize,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    /// Set when some location fell back to a scale-only fit because the
    /// normal equations were singular.
    pub singular_fallback: bool,
}

/// `D^g = α·D^a + β`; results at or below [`EPS_DEPTH`] become invalid.
pub fn global_align(da: &DepthMap, g: GlobalAffine) -> Result<DepthMap> {
    da.require_stage(DepthStage::AffineInvariant)?;
    let vals = da.values().iter().map(|d| g.alpha * d + g.beta).collect();
    Ok(DepthMap::with_eps(
        da.width(),
        da.height(),
        vals,
        da.validity(),
        DepthStage::GloballyAligned,
    ))
}

/// Pixel centres of a `side × side` partition of the image.
pub fn anchor_grid(width: usize, height: usize, m: usize) -> Result<(usize, Vec<(usize, usize)>)> {
    let side = (m as f64).sqrt().round() as usize;
    if m == 0 || side * side != m {
        return Err(ReconError::invalid(format!(
            "anchor count must be a positive perfect square, got {m}"
        )));
    }
    if side > width || side > height {
        return Err(ReconError::invalid(format!(
            "{side}x{side} anchor grid does not fit a {width}x{height} map"
        )));
    }
    let centre = |k: usize, len: usize| ((k as f64 + 0.5) * len as f64 / side as f64) as usize;
    let mut coords = Vec::with_capacity(m);
    for gy in 0..side {
        for gx in 0..side {
            coords.push((centre(gx, width), centre(gy, height)));
        }
    }
    Ok((side, coords))
}

/// Reads `m` anchors from a globally aligned map with unit weights.
pub fn sample_anchors(dg: &DepthMap, m: usize) -> Result<AnchorSet> {
    dg.require_stage(DepthStage::GloballyAligned)?;
    let (side, coords) = anchor_grid(dg.width(), dg.height(), m)?;
    let depths = coords.iter().map(|&(x, y)| dg.get(x, y)).collect();
    let valid: Vec<bool> = coords.iter().map(|&(x, y)| dg.is_valid(x, y)).collect();
    if !valid.iter().any(|v| *v) {
        return Err(ReconError::DegenerateInput(
            "every anchor lands on an invalid pixel".into(),
        ));
    }
    Ok(AnchorSet {
        grid_side: side,
        coords,
        omega: vec![1.0; m],
        depths,
        valid,
    })
}

/// Solves the local ridge regression at every location and returns dense
/// scale/shift maps.
pub fn lwlr_solve(
    dg: &DepthMap,
    anchors: &AnchorSet,
    targets: &[f64],
    cfg: &LwlrConfig,
) -> Result<LocalAffineMaps> {
    cfg.validate()?;
    if targets.len() != anchors.len() {
        return Err(ReconError::invalid("one target per anchor is required"));
    }
    let plan = AlignmentPlan::with_coords(dg.width(), dg.height(), anchors.coords.clone(), cfg)?;
    let fit = plan.fit(&anchors.depths, &anchors.valid, targets)?;
    let (scale, shift) = plan.upsample(&fit);
    Ok(LocalAffineMaps {
        width: dg.width(),
        height: dg.height(),
        scale,
        shift,
        singular_fallback: fit.fallback,
    })
}

/// Full rectification `F(D^a; α, β, ω)`: global alignment, anchor sampling,
/// local regression and the elementwise local correction.
pub fn consistency_align(
    da: &DepthMap,
    g: GlobalAffine,
    omega: &[f64],
    cfg: &LwlrConfig,
) -> Result<DepthMap> {
    let dg = global_align(da, g)?;
    let mut anchors = sample_anchors(&dg, omega.len())?;
    anchors.omega.copy_from_slice(omega);
    let maps = lwlr_solve(&dg, &anchors, &anchors.targets(), cfg)?;
    Ok(apply_local(&dg, &maps))
}

/// `D = A ⊙ D^g + B`, tagging the result scale-consistent.
pub fn apply_local(dg: &DepthMap, maps: &LocalAffineMaps) -> DepthMap {
    let vals = dg
        .values()
        .iter()
        .zip(maps.scale.iter().zip(&maps.shift))
        .map(|(d, (a, b))| a * d + b)
        .collect();
    DepthMap::with_eps(
        dg.width(),
        dg.height(),
        vals,
        dg.validity(),
        DepthStage::ScaleConsistent,
    )
}

/// Interpolation table along one axis: for every pixel, the bracketing
/// lattice nodes and the weight of the upper node.
#[derive(Debug, Clone)]
struct AxisUpsample {
    nodes: Vec<usize>,
    lo: Vec<usize>,
    hi: Vec<usize>,
    w_hi: Vec<f64>,
}

impl AxisUpsample {
    fn new(len: usize, stride: usize) -> Self {
        let mut nodes: Vec<usize> = (0..len).step_by(stride).collect();
        if *nodes.last().unwrap() != len - 1 {
            nodes.push(len - 1);
        }
        let mut lo = Vec::with_capacity(len);
        let mut hi = Vec::with_capacity(len);
        let mut w_hi = Vec::with_capacity(len);
        let mut k = 0;
        for x in 0..len {
            while k + 1 < nodes.len() && nodes[k + 1] <= x {
                k += 1;
            }
            if k + 1 == nodes.len() {
                lo.push(k);
                hi.push(k);
                w_hi.push(0.0);
            } else {
                let span = (nodes[k + 1] - nodes[k]) as f64;
                lo.push(k);
                hi.push(k + 1);
                w_hi.push((x - nodes[k]) as f64 / span);
            }
        }
        Self {
            nodes,
            lo,
            hi,
            w_hi,
        }
    }
}

/// Normal-equation data for one solved location.
#[derive(Debug, Clone, Copy, Default)]
struct LocalSolve {
    s_dd: f64,
    s_d: f64,
    s_1: f64,
    s_dy: f64,
    s_y: f64,
    scale: f64,
    shift: f64,
    fallback: bool,
}

/// Coarse-lattice fit shared by forward evaluation and differentiation.
#[derive(Debug, Clone)]
pub(crate) struct CoarseFit {
    solves: Vec<LocalSolve>,
    fallback: bool,
}

/// Precomputed geometry of the rectification for one resolution: anchor
/// positions, the coarse lattice and its Gaussian weights, and upsampling
/// tables. Evaluates the rectification and its vector-Jacobian product.
#[derive(Debug, Clone)]
pub struct AlignmentPlan {
    width: usize,
    height: usize,
    coords: Vec<(usize, usize)>,
    lambda: f64,
    xs: AxisUpsample,
    ys: AxisUpsample,
    /// `weights[c * m + t]` for lattice node `c` and anchor `t`.
    weights: Vec<f64>,
}

/// Forward state of one rectified frame, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AlignedFrame {
    pub depth: DepthMap,
    dg: Vec<f64>,
    scale: Vec<f64>,
    anchor_depths: Vec<f64>,
    anchor_valid: Vec<bool>,
    targets: Vec<f64>,
    fit: CoarseFit,
}

/// Gradient of a scalar objective with respect to one frame's rectification
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentGrad {
    pub alpha: f64,
    pub beta: f64,
    pub omega: Vec<f64>,
}

impl AlignmentPlan {
    pub fn new(width: usize, height: usize, m: usize, cfg: &LwlrConfig) -> Result<Self> {
        let (_, coords) = anchor_grid(width, height, m)?;
        Self::with_coords(width, height, coords, cfg)
    }

    fn with_coords(
        width: usize,
        height: usize,
        coords: Vec<(usize, usize)>,
        cfg: &LwlrConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if width == 0 || height == 0 {
            return Err(ReconError::invalid("map dimensions must be positive"));
        }
        let xs = AxisUpsample::new(width, cfg.stride);
        let ys = AxisUpsample::new(height, cfg.stride);
        let m = coords.len();
        let inv_2b2 = 1.0 / (2.0 * cfg.bandwidth * cfg.bandwidth);
        let mut weights = Vec::with_capacity(xs.nodes.len() * ys.nodes.len() * m);
        for &y in &ys.nodes {
            for &x in &xs.nodes {
                for &(ax, ay) in &coords {
                    let dx = x as f64 - ax as f64;
                    let dy = y as f64 - ay as f64;
                    weights.push(INV_SQRT_2PI * (-(dx * dx + dy * dy) * inv_2b2).exp());
                }
            }
        }
        Ok(Self {
            width,
            height,
            coords,
            lambda: cfg.lambda,
            xs,
            ys,
            weights,
        })
    }

    pub fn anchor_count(&self) -> usize {
        self.coords.len()
    }

    pub fn anchor_coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    fn lattice_len(&self) -> usize {
        self.xs.nodes.len() * self.ys.nodes.len()
    }

    fn fit(&self, depths: &[f64], valid: &[bool], targets: &[f64]) -> Result<CoarseFit> {
        let m = self.coords.len();
        if valid.iter().filter(|v| **v).count() < 2 {
            return Err(ReconError::DegenerateInput(
                "local regression needs at least two valid anchors".into(),
            ));
        }
        let mut solves = Vec::with_capacity(self.lattice_len());
        let mut any_fallback = false;
        for c in 0..self.lattice_len() {
            let w = &self.weights[c * m..(c + 1) * m];
            let mut ls = LocalSolve::default();
            for t in 0..m {
                if !valid[t] {
                    continue;
                }
                let (d, y) = (depths[t], targets[t]);
                ls.s_dd += w[t] * d * d;
                ls.s_d += w[t] * d;
                ls.s_1 += w[t];
                ls.s_dy += w[t] * d * y;
                ls.s_y += w[t] * y;
            }
            let m11 = ls.s_1 + self.lambda;
            let det = ls.s_dd * m11 - ls.s_d * ls.s_d;
            if det > 1e-12 * ls.s_dd * m11 {
                ls.scale = (m11 * ls.s_dy - ls.s_d * ls.s_y) / det;
                ls.shift = (ls.s_dd * ls.s_y - ls.s_d * ls.s_dy) / det;
            } else if ls.s_dd > 0.0 {
                ls.fallback = true;
                ls.scale = ls.s_dy / ls.s_dd;
                ls.shift = 0.0;
            } else {
                ls.fallback = true;
                ls.scale = 1.0;
                ls.shift = 0.0;
            }
            any_fallback |= ls.fallback;
            solves.push(ls);
        }
        if any_fallback {
            log::warn!("local regression fell back to scale-only fits (singular system)");
        }
        Ok(CoarseFit {
            solves,
            fallback: any_fallback,
        })
    }

    fn upsample(&self, fit: &CoarseFit) -> (Vec<f64>, Vec<f64>) {
        let nx = self.xs.nodes.len();
        let mut scale = Vec::with_capacity(self.width * self.height);
        let mut shift = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            let (y0, y1, wy) = (self.ys.lo[y], self.ys.hi[y], self.ys.w_hi[y]);
            for x in 0..self.width {
                let (x0, x1, wx) = (self.xs.lo[x], self.xs.hi[x], self.xs.w_hi[x]);
                let corners = [
                    (y0 * nx + x0, (1.0 - wx) * (1.0 - wy)),
                    (y0 * nx + x1, wx * (1.0 - wy)),
                    (y1 * nx + x0, (1.0 - wx) * wy),
                    (y1 * nx + x1, wx * wy),
                ];
                let mut a = 0.0;
                let mut b = 0.0;
                for (c, w) in corners {
                    if w != 0.0 {
                        a += w * fit.solves[c].scale;
                        b += w * fit.solves[c].shift;
                    }
                }
                scale.push(a);
                shift.push(b);
            }
        }
        (scale, shift)
    }

    /// Rectifies an affine-invariant map with parameters `(α, β, ω)`.
    pub fn forward(&self, da: &DepthMap, g: GlobalAffine, omega: &[f64]) -> Result<AlignedFrame> {
        da.require_stage(DepthStage::AffineInvariant)?;
        if da.width() != self.width || da.height() != self.height {
            return Err(ReconError::invalid("depth map resolution differs from plan"));
        }
        if omega.len() != self.coords.len() {
            return Err(ReconError::invalid(format!(
                "expected {} anchor weights, got {}",
                self.coords.len(),
                omega.len()
            )));
        }
        let dg: Vec<f64> = da.values().iter().map(|d| g.alpha * d + g.beta).collect();
        let dg_valid: Vec<bool> = dg
            .iter()
            .zip(da.validity())
            .map(|(d, ok)| *ok && d.is_finite() && *d > EPS_DEPTH)
            .collect();
        let idx = |(x, y): (usize, usize)| y * self.width + x;
        let anchor_depths: Vec<f64> = self.coords.iter().map(|&p| dg[idx(p)]).collect();
        let anchor_valid: Vec<bool> = self.coords.iter().map(|&p| dg_valid[idx(p)]).collect();
        let targets: Vec<f64> = omega
            .iter()
            .zip(&anchor_depths)
            .map(|(w, d)| w * d)
            .collect();
        let fit = self.fit(&anchor_depths, &anchor_valid, &targets)?;
        let (scale, shift) = self.upsample(&fit);
        let vals = dg
            .iter()
            .zip(scale.iter().zip(&shift))
            .map(|(d, (a, b))| a * d + b)
            .collect();
        let depth = DepthMap::with_eps(
            self.width,
            self.height,
            vals,
            &dg_valid,
            DepthStage::ScaleConsistent,
        );
        Ok(AlignedFrame {
            depth,
            dg,
            scale,
            anchor_depths,
            anchor_valid,
            targets,
            fit,
        })
    }

    /// Pulls `∂L/∂D` (one entry per pixel, zero on invalid pixels) back onto
    /// `(α, β, ω)`.
    pub fn backward(
        &self,
        da: &DepthMap,
        frame: &AlignedFrame,
        omega: &[f64],
        depth_grad: &[f64],
    ) -> AlignmentGrad {
        let m = self.coords.len();
        let nx = self.xs.nodes.len();
        let mut grad = AlignmentGrad {
            alpha: 0.0,
            beta: 0.0,
            omega: vec![0.0; m],
        };
        let mut scale_bar = vec![0.0; self.lattice_len()];
        let mut shift_bar = vec![0.0; self.lattice_len()];
        let valid = frame.depth.validity();
        for y in 0..self.height {
            let (y0, y1, wy) = (self.ys.lo[y], self.ys.hi[y], self.ys.w_hi[y]);
            for x in 0..self.width {
                let i = y * self.width + x;
                let g = depth_grad[i];
                if g == 0.0 || !valid[i] {
                    continue;
                }
                // D = A·Dg + B
                let dg_bar = g * frame.scale[i];
                grad.alpha += dg_bar * da.values()[i];
                grad.beta += dg_bar;
                let a_bar = g * frame.dg[i];
                let (x0, x1, wx) = (self.xs.lo[x], self.xs.hi[x], self.xs.w_hi[x]);
                let corners = [
                    (y0 * nx + x0, (1.0 - wx) * (1.0 - wy)),
                    (y0 * nx + x1, wx * (1.0 - wy)),
                    (y1 * nx + x0, (1.0 - wx) * wy),
                    (y1 * nx + x1, wx * wy),
                ];
                for (c, w) in corners {
                    scale_bar[c] += w * a_bar;
                    shift_bar[c] += w * g;
                }
            }
        }

        let mut d_bar = vec![0.0; m];
        let mut y_bar = vec![0.0; m];
        for (c, ls) in frame.fit.solves.iter().enumerate() {
            let (sb, tb) = (scale_bar[c], shift_bar[c]);
            if sb == 0.0 && tb == 0.0 {
                continue;
            }
            let w = &self.weights[c * m..(c + 1) * m];
            // adjoints of the normal-equation sums
            let (g_dd, g_d, g_dy, g_y);
            if ls.fallback {
                if ls.s_dd > 0.0 {
                    g_dy = sb / ls.s_dd;
                    g_dd = -sb * ls.s_dy / (ls.s_dd * ls.s_dd);
                } else {
                    g_dy = 0.0;
                    g_dd = 0.0;
                }
                g_d = 0.0;
                g_y = 0.0;
            } else {
                // sol = M⁻¹ r with M symmetric: r̄ = M⁻¹ sol̄, M̄ = −r̄ solᵀ
                let m11 = ls.s_1 + self.lambda;
                let det = ls.s_dd * m11 - ls.s_d * ls.s_d;
                let r0 = (m11 * sb - ls.s_d * tb) / det;
                let r1 = (ls.s_dd * tb - ls.s_d * sb) / det;
                g_dy = r0;
                g_y = r1;
                g_dd = -r0 * ls.scale;
                g_d = -(r0 * ls.shift + r1 * ls.scale);
            }
            for t in 0..m {
                if !frame.anchor_valid[t] {
                    continue;
                }
                let (d, yv) = (frame.anchor_depths[t], frame.targets[t]);
                d_bar[t] += w[t] * (2.0 * d * g_dd + g_d + yv * g_dy);
                y_bar[t] += w[t] * (d * g_dy + g_y);
            }
        }
        for t in 0..m {
            if !frame.anchor_valid[t] {
                continue;
            }
            grad.omega[t] = y_bar[t] * frame.anchor_depths[t];
            let dt = d_bar[t] + y_bar[t] * omega[t];
            let (ax, ay) = self.coords[t];
            grad.alpha += dt * da.values()[ay * self.width + ax];
            grad.beta += dt;
        }
        grad
    }
}
