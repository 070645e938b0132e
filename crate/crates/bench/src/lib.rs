//! Shared fixtures for the criterion benchmarks.

use recon_core::synth::{corrupt_depth, render_scene};
use recon_core::{CorruptionSpec, DepthMap, ImageBuffer, Result, SceneSpec};

/// A synthetic scene of `width`×`height` pixels and `frames` arc frames.
pub fn scene(width: usize, height: usize, frames: usize) -> SceneSpec {
    let mut s = SceneSpec::default();
    s.focal *= width as f64 / s.width as f64;
    s.width = width;
    s.height = height;
    s.supersample = 1;
    s.trajectory.arc_frames = frames;
    s
}

/// Rendered images with ground-truth and corrupted depth for every frame.
pub fn render(scene: &SceneSpec, seed: u64) -> Result<(Vec<ImageBuffer>, Vec<DepthMap>, Vec<DepthMap>)> {
    let n = scene.frame_count();
    let mut imgs = Vec::with_capacity(n);
    let mut gts = Vec::with_capacity(n);
    for f in 0..n {
        let (img, gt) = render_scene(scene, f)?;
        imgs.push(img);
        gts.push(gt);
    }
    let medians: Vec<f64> = gts.iter().filter_map(DepthMap::median).collect();
    let spec = CorruptionSpec::random(&medians, seed);
    let corrupted = (0..n).map(|f| corrupt_depth(&gts[f], &spec, f)).collect::<Result<Vec<_>>>()?;
    Ok((imgs, gts, corrupted))
}
