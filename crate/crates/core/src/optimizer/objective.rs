//! The total loss over sampled keyframe pairs and its gradient.
//!
//! [`Problem::evaluate`] composes the public alignment, warping and loss
//! functions. [`Problem::compute_gradients`] fuses the same forward pass with
//! a hand-written reverse sweep; the two must agree in value.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use super::params::{sigmoid, ParamGroup, ParamLayout, ParamVector};
use crate::alignment::{AlignedFrame, AlignmentPlan, LwlrConfig};
use crate::error::{ReconError, Result};
use crate::geometry::{
    euler_partials, init_focal, make_relative_pose, BilinearCell, Intrinsics, PixelCoord,
    PoseMatrix,
};
use crate::losses::{
    geometric_loss, photometric_loss, regularization_loss, total_loss, warp_pair, LossBreakdown,
    LossWeights,
};
use crate::raster::{DepthMap, DepthStage, ImageBuffer, EPS_DEPTH};

/// Which parameter groups stay fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FreezeFlags {
    pub poses: bool,
    pub intrinsics: bool,
    pub omega: bool,
}

impl FreezeFlags {
    pub fn is_frozen(&self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::Rotation | ParamGroup::Translation => self.poses,
            ParamGroup::Delta => self.intrinsics,
            ParamGroup::Omega => self.omega,
            ParamGroup::Alpha | ParamGroup::Beta => false,
        }
    }
}

/// Loss value of one step plus pair bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Evaluation {
    pub loss: LossBreakdown,
    pub pairs: usize,
    pub no_overlap: usize,
}

/// Everything fixed during optimization: frames, affine-invariant depths and
/// the rectification plan.
#[derive(Debug, Clone)]
pub struct Problem {
    images: Vec<ImageBuffer>,
    depths: Vec<DepthMap>,
    plan: AlignmentPlan,
    f0: f64,
    width: usize,
    height: usize,
    fixed_poses: Option<Vec<PoseMatrix>>,
}

struct PoseChain {
    rels: Vec<PoseMatrix>,
    poses: Vec<PoseMatrix>,
}

impl Problem {
    pub fn new(
        images: Vec<ImageBuffer>,
        depths: Vec<DepthMap>,
        anchors: usize,
        lwlr: &LwlrConfig,
    ) -> Result<Self> {
        if images.is_empty() || images.len() != depths.len() {
            return Err(ReconError::invalid("need one depth map per image and at least one frame"));
        }
        let (width, height) = (images[0].width(), images[0].height());
        for (img, d) in images.iter().zip(&depths) {
            if img.width() != width || img.height() != height || d.width() != width || d.height() != height {
                return Err(ReconError::invalid("frames and depth maps must share one resolution"));
            }
            if img.channels() != images[0].channels() {
                return Err(ReconError::invalid("frames must share a channel count"));
            }
            d.require_stage(DepthStage::AffineInvariant)?;
        }
        let plan = AlignmentPlan::new(width, height, anchors, lwlr)?;
        Ok(Self {
            images,
            depths,
            plan,
            f0: init_focal(width, height)?,
            width,
            height,
            fixed_poses: None,
        })
    }

    /// Uses the given camera-to-world poses instead of chaining the relative
    /// pose parameters.
    pub fn with_fixed_poses(mut self, poses: Vec<PoseMatrix>) -> Result<Self> {
        if poses.len() != self.images.len() {
            return Err(ReconError::invalid("one fixed pose per frame is required"));
        }
        self.fixed_poses = Some(poses);
        Ok(self)
    }

    pub fn frame_count(&self) -> usize {
        self.images.len()
    }

    pub fn anchor_count(&self) -> usize {
        self.plan.anchor_count()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout {
            frames: self.frame_count(),
            anchors: self.anchor_count(),
        }
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn images(&self) -> &[ImageBuffer] {
        &self.images
    }

    pub fn plan(&self) -> &AlignmentPlan {
        &self.plan
    }

    pub fn has_fixed_poses(&self) -> bool {
        self.fixed_poses.is_some()
    }

    pub fn intrinsics(&self, params: &ParamVector) -> Result<Intrinsics> {
        let delta = params.delta();
        if !(delta.is_finite() && delta > 0.0) {
            return Err(ReconError::DegenerateInput(format!(
                "focal scale left the positive range: {delta}"
            )));
        }
        Intrinsics::new(delta, self.f0, self.width, self.height)
    }

    fn chain(&self, params: &ParamVector) -> PoseChain {
        let n = self.frame_count();
        let rels: Vec<PoseMatrix> = (0..n - 1)
            .map(|k| make_relative_pose(&params.relative(k)))
            .collect();
        let poses = match &self.fixed_poses {
            Some(p) => p.clone(),
            None => {
                let mut poses = Vec::with_capacity(n);
                poses.push(PoseMatrix::identity());
                for rel in &rels {
                    let next = poses.last().unwrap().compose(rel);
                    poses.push(next);
                }
                poses
            }
        };
        PoseChain { rels, poses }
    }

    /// Camera-to-world poses for the given parameters.
    pub fn poses(&self, params: &ParamVector) -> Vec<PoseMatrix> {
        self.chain(params).poses
    }

    /// Scale-consistent depth of frame `i`.
    pub fn rectify(&self, params: &ParamVector, i: usize) -> Result<DepthMap> {
        Ok(self
            .plan
            .forward(&self.depths[i], params.global(i), params.omega(i))?
            .depth)
    }

    fn check(&self, params: &ParamVector, pairs: &[(usize, usize)]) -> Result<()> {
        if params.layout() != self.layout() {
            return Err(ReconError::invalid("parameter layout does not match the problem"));
        }
        let n = self.frame_count();
        if let Some(&(i, j)) = pairs.iter().find(|(i, j)| *i >= n || *j >= n || i == j) {
            return Err(ReconError::invalid(format!("invalid keyframe pair ({i}, {j})")));
        }
        Ok(())
    }

    /// Loss value composed from the public building blocks.
    pub fn evaluate(
        &self,
        params: &ParamVector,
        pairs: &[(usize, usize)],
        w: &LossWeights,
    ) -> Result<Evaluation> {
        self.check(params, pairs)?;
        let intr = self.intrinsics(params)?;
        let poses = self.poses(params);
        let mut rect: Vec<Option<DepthMap>> = vec![None; self.frame_count()];
        let (mut pc, mut gc, mut empty) = (0.0, 0.0, 0usize);
        for &(i, j) in pairs {
            for f in [i, j] {
                if rect[f].is_none() {
                    rect[f] = Some(self.rectify(params, f)?);
                }
            }
            let (di, dj) = (rect[i].as_ref().unwrap(), rect[j].as_ref().unwrap());
            let pw = warp_pair(di, dj, &intr, &poses[i], &poses[j], None);
            let coords: Vec<PixelCoord> = pw.warps.iter().map(|w| w.coord).collect();
            let depths: Vec<f64> = pw.warps.iter().map(|w| w.depth).collect();
            let lp = photometric_loss(&self.images[i], &self.images[j], &coords, &pw.valid)?;
            let lg = geometric_loss(dj, &depths, &coords, &pw.valid)?;
            if !(lp.value.is_finite() && lg.value.is_finite()) {
                return Err(ReconError::NonFiniteLoss(i, j));
            }
            empty += usize::from(lp.no_overlap);
            pc += lp.value;
            gc += lg.value;
        }
        let np = pairs.len().max(1) as f64;
        let omegas: Vec<&[f64]> = (0..self.frame_count()).map(|i| params.omega(i)).collect();
        Ok(Evaluation {
            loss: total_loss(pc / np, gc / np, regularization_loss(&omegas), w),
            pairs: pairs.len(),
            no_overlap: empty,
        })
    }

    /// Loss and `∂L/∂θ` over the stored parameters; frozen entries are 0.
    pub fn compute_gradients(
        &self,
        params: &ParamVector,
        pairs: &[(usize, usize)],
        w: &LossWeights,
        freeze: &FreezeFlags,
    ) -> Result<(Evaluation, Vec<f64>)> {
        self.check(params, pairs)?;
        let layout = self.layout();
        let n = self.frame_count();
        let npix = self.width * self.height;
        let intr = self.intrinsics(params)?;
        let chain = self.chain(params);

        let mut aligned: Vec<Option<AlignedFrame>> = vec![None; n];
        for &(i, j) in pairs {
            for f in [i, j] {
                if aligned[f].is_none() {
                    aligned[f] = Some(self.plan.forward(&self.depths[f], params.global(f), params.omega(f))?);
                }
            }
        }

        let mut depth_bar: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut rot_bar = vec![Matrix3::<f64>::zeros(); n];
        let mut trans_bar = vec![Vector3::<f64>::zeros(); n];
        let mut focal_bar = 0.0;
        let (mut pc, mut gc, mut empty) = (0.0, 0.0, 0usize);
        let np = pairs.len().max(1) as f64;
        let mut scratch = PairScratch::default();

        for &(i, j) in pairs {
            let di = &aligned[i].as_ref().unwrap().depth;
            let dj = &aligned[j].as_ref().unwrap().depth;
            scratch.clear();
            let (pi, pj) = (&chain.poses[i], &chain.poses[j]);
            let stats = pair_pass(
                &self.images[i],
                &self.images[j],
                di,
                dj,
                &intr,
                pi,
                pj,
                w,
                &mut scratch,
            );
            if !(stats.pc.is_finite() && stats.gc.is_finite()) {
                return Err(ReconError::NonFiniteLoss(i, j));
            }
            if stats.count == 0 {
                empty += 1;
                continue;
            }
            let inv = 1.0 / stats.count as f64;
            pc += stats.pc * inv;
            gc += stats.gc * inv;
            let s = inv / np;
            for (buf, entries) in [(i, &scratch.src), (j, &scratch.dst)] {
                let d = &mut depth_bar[buf];
                if d.is_empty() {
                    d.resize(npix, 0.0);
                }
                for &(idx, g) in entries.iter() {
                    d[idx] += s * g;
                }
            }
            focal_bar += s * scratch.focal;
            let (ri, rj) = (pi.rotation(), pj.rotation());
            let delta = pi.translation() - pj.translation();
            let mb = scratch.m_bar * s;
            let cb = scratch.c_bar * s;
            rot_bar[i] += rj * mb;
            rot_bar[j] += ri * mb.transpose() + delta * cb.transpose();
            let db = rj * cb;
            trans_bar[i] += db;
            trans_bar[j] -= db;
        }

        let mut grad = vec![0.0; layout.len()];
        for f in 0..n {
            if depth_bar[f].is_empty() {
                continue;
            }
            let frame = aligned[f].as_ref().unwrap();
            let g = self
                .plan
                .backward(&self.depths[f], frame, params.omega(f), &depth_bar[f]);
            let rho = params.values()[layout.rho(f)];
            grad[layout.rho(f)] += g.alpha * sigmoid(rho);
            grad[layout.beta(f)] += g.beta;
            for (slot, v) in grad[layout.omega(f)].iter_mut().zip(&g.omega) {
                *slot += v;
            }
        }

        if self.fixed_poses.is_none() && n > 1 {
            let mut g4: Vec<Matrix4<f64>> = (0..n)
                .map(|f| {
                    let mut m = Matrix4::zeros();
                    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot_bar[f]);
                    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&trans_bar[f]);
                    m
                })
                .collect();
            // P_k = P_{k-1} · rel_{k-1}
            for k in (1..n).rev() {
                let rel_bar = chain.poses[k - 1].matrix().transpose() * g4[k];
                let carry = g4[k] * chain.rels[k - 1].matrix().transpose();
                g4[k - 1] += carry;
                let rp = params.relative(k - 1);
                let partials = euler_partials(rp.r);
                let base = layout.pose(k - 1);
                let rb = rel_bar.fixed_view::<3, 3>(0, 0);
                for a in 0..3 {
                    grad[base + a] += rb.component_mul(&partials[a]).sum();
                    grad[base + 3 + a] += rel_bar[(a, 3)];
                }
            }
        }

        grad[layout.delta()] += focal_bar * self.f0;

        let mut regu = 0.0;
        for f in 0..n {
            for (slot, om) in layout.omega(f).zip(params.omega(f)) {
                regu += (1.0 - om).abs();
                grad[slot] -= w.regu * sign(1.0 - om);
            }
        }

        for (idx, g) in grad.iter_mut().enumerate() {
            if freeze.is_frozen(layout.group(idx)) {
                *g = 0.0;
            } else if !g.is_finite() {
                return Err(ReconError::NonFiniteGradient(idx));
            }
        }
        if self.fixed_poses.is_some() {
            for k in 0..n.saturating_sub(1) {
                let s = layout.pose(k);
                grad[s..s + 6].fill(0.0);
            }
        }

        let eval = Evaluation {
            loss: total_loss(pc / np, gc / np, regu, w),
            pairs: pairs.len(),
            no_overlap: empty,
        };
        if !eval.loss.total.is_finite() {
            return Err(ReconError::NonFiniteLoss(usize::MAX, usize::MAX));
        }
        Ok((eval, grad))
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Unnormalized adjoints of one pair; scaled by `1/(pairs·|V|)` afterwards.
#[derive(Default)]
struct PairScratch {
    src: Vec<(usize, f64)>,
    dst: Vec<(usize, f64)>,
    m_bar: Matrix3<f64>,
    c_bar: Vector3<f64>,
    focal: f64,
}

impl PairScratch {
    fn clear(&mut self) {
        self.src.clear();
        self.dst.clear();
        self.m_bar = Matrix3::zeros();
        self.c_bar = Vector3::zeros();
        self.focal = 0.0;
    }
}

struct PairStats {
    pc: f64,
    gc: f64,
    count: usize,
}

/// Forward and reverse sweep over the pixels of frame `i` warped into `j`.
#[allow(clippy::too_many_arguments)]
fn pair_pass(
    img_i: &ImageBuffer,
    img_j: &ImageBuffer,
    di: &DepthMap,
    dj: &DepthMap,
    intr: &Intrinsics,
    pose_i: &PoseMatrix,
    pose_j: &PoseMatrix,
    w: &LossWeights,
    out: &mut PairScratch,
) -> PairStats {
    let (width, height) = (di.width(), di.height());
    let (f, cx, cy) = (intr.focal(), intr.cx(), intr.cy());
    let rj_t = pose_j.rotation().transpose();
    let rot = rj_t * pose_i.rotation();
    let trans = rj_t * (pose_i.translation() - pose_j.translation());
    let shortcut = pose_i == pose_j
        || (rot == Matrix3::identity() && trans.iter().all(|v| *v == 0.0));
    let channels = img_i.channels();
    let inv_c = 1.0 / channels as f64;
    let (umax, vmax) = ((width - 1) as f64, (height - 1) as f64);
    let dvals = di.values();
    let dvalid = di.validity();
    let jvals = dj.values();
    let jvalid = dj.validity();
    let need_grad = w.pc != 0.0 || w.gc != 0.0;
    let mut stats = PairStats {
        pc: 0.0,
        gc: 0.0,
        count: 0,
    };

    for y in 0..height {
        for x in 0..width {
            let idx = y * width + x;
            if !dvalid[idx] {
                continue;
            }
            let d = dvals[idx];
            let xn = (x as f64 - cx) / f;
            let yn = (y as f64 - cy) / f;
            let xc = Vector3::new(xn * d, yn * d, d);
            let xw = rot * xc + trans;
            let (u, v, z) = if shortcut {
                (x as f64, y as f64, d)
            } else {
                if !(xw.z > EPS_DEPTH) {
                    continue;
                }
                (f * xw.x / xw.z + cx, f * xw.y / xw.z + cy, xw.z)
            };
            if !(z > EPS_DEPTH && u >= 0.0 && v >= 0.0 && u <= umax && v <= vmax) {
                continue;
            }
            let Some(cell) = BilinearCell::locate(width, height, u, v) else {
                continue;
            };
            let corners = cell.corners();
            if !corners.iter().all(|&(cx_, cy_, _)| jvalid[cy_ * width + cx_]) {
                continue;
            }
            let a = cell.interpolate(|px, py| jvals[py * width + px]);
            if a.value + z < 2.0 * EPS_DEPTH {
                continue;
            }
            stats.count += 1;

            let (mut ub, mut vb) = (0.0, 0.0);
            let mut lp = 0.0;
            for c in 0..channels {
                let s = cell.interpolate(|px, py| img_j.get(px, py, c));
                let diff = img_i.get(x, y, c) - s.value;
                lp += diff.abs();
                let g = -w.pc * inv_c * sign(diff);
                ub += g * s.du;
                vb += g * s.dv;
            }
            stats.pc += lp * inv_c;

            let den = a.value + z;
            let num = (a.value - z).abs();
            stats.gc += num / den;
            if !need_grad {
                continue;
            }
            let sg = sign(a.value - z);
            let den2 = den * den;
            let a_bar = w.gc * (sg * den - num) / den2;
            let z_bar = w.gc * (-sg * den - num) / den2;
            if a_bar != 0.0 {
                ub += a_bar * a.du;
                vb += a_bar * a.dv;
                for &(px, py, cw) in &corners {
                    if cw != 0.0 {
                        out.dst.push((py * width + px, a_bar * cw));
                    }
                }
            }

            // projection u = f·X/Z + cx, v = f·Y/Z + cy
            let iz = 1.0 / xw.z;
            let xbar = Vector3::new(
                ub * f * iz,
                vb * f * iz,
                z_bar - (ub * xw.x + vb * xw.y) * f * iz * iz,
            );
            out.focal += (ub * xw.x + vb * xw.y) * iz;
            // X = rot · (d·ray) + trans
            out.m_bar += xbar * xc.transpose();
            out.c_bar += xbar;
            let xc_bar = rot.transpose() * xbar;
            let ray_dot = xc_bar.x * xn + xc_bar.y * yn + xc_bar.z;
            out.src.push((idx, ray_dot));
            // ray = ((x − cx)/f, (y − cy)/f, 1)
            out.focal -= d * (xc_bar.x * xn + xc_bar.y * yn) / f;
        }
    }
    stats
}
