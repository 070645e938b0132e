//! Sequence directories on disk.
//!
//! ```text
//! rgb/NNNN.png|ppm        frames, sorted by file name
//! depth/NNNN.pfm          affine-invariant depth, matched to frames by stem
//! mask/NNNN.png           optional sky masks (nonzero = sky)
//! gt/poses.txt            optional camera-to-world poses, one line per frame
//! gt/intrinsics.json      optional {fx, fy, cx, cy}
//! gt/depth/NNNN.pfm       optional metric depth
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use recon_core::io::{read_image, read_mask, read_pfm_depth, read_trajectory};
use recon_core::{DepthMap, DepthStage, ImageBuffer, PoseMatrix, Trajectory};
use serde::{Deserialize, Serialize};

pub const RGB_DIR: &str = "rgb";
pub const DEPTH_DIR: &str = "depth";
pub const MASK_DIR: &str = "mask";
pub const GT_DIR: &str = "gt";
pub const GT_POSES: &str = "gt/poses.txt";
pub const GT_INTRINSICS: &str = "gt/intrinsics.json";
pub const GT_DEPTH_DIR: &str = "gt/depth";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    /// The poses file as read, one entry per frame in frame order.
    pub trajectory: Option<Trajectory>,
    pub poses: Option<Vec<PoseMatrix>>,
    pub intrinsics: Option<GtIntrinsics>,
    pub depths: Option<Vec<DepthMap>>,
}

impl GroundTruth {
    pub fn is_empty(&self) -> bool {
        self.poses.is_none() && self.intrinsics.is_none() && self.depths.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct SequenceBundle {
    /// File stems in frame order.
    pub stems: Vec<String>,
    pub images: Vec<ImageBuffer>,
    /// Affine-invariant depth with sky pixels already invalidated.
    pub depths: Vec<DepthMap>,
    pub sky_masked: bool,
    pub gt: GroundTruth,
}

impl SequenceBundle {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn width(&self) -> usize {
        self.images[0].width()
    }

    pub fn height(&self) -> usize {
        self.images[0].height()
    }
}

/// Frame file stems under `rgb/` with their paths, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let rgb = dir.join(RGB_DIR);
    let entries = std::fs::read_dir(&rgb).with_context(|| format!("listing {}", rgb.display()))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("png" | "ppm")) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).context("frame file name is not UTF-8")?;
        frames.push((stem.to_owned(), path.clone()));
    }
    frames.sort_by(|a, b| a.1.file_name().cmp(&b.1.file_name()));
    if frames.is_empty() {
        bail!("no png or ppm frames in {}", rgb.display());
    }
    for pair in frames.windows(2) {
        if pair[0].0 == pair[1].0 {
            bail!("frame stem '{}' appears twice", pair[0].0);
        }
    }
    Ok(frames)
}

fn check_size(what: &str, stem: &str, got: (usize, usize), want: (usize, usize)) -> Result<()> {
    if got != want {
        bail!(
            "{what} for frame '{stem}' is {}x{}, expected {}x{}",
            got.0,
            got.1,
            want.0,
            want.1
        );
    }
    Ok(())
}

/// Reads one depth map per stem from `dir`, naming the first missing stem.
fn read_depth_dir(dir: &Path, stems: &[String], stage: DepthStage, size: (usize, usize)) -> Result<Vec<DepthMap>> {
    stems
        .iter()
        .map(|stem| {
            let path = dir.join(format!("{stem}.pfm"));
            if !path.is_file() {
                bail!("missing depth for frame '{stem}' (expected {})", path.display());
            }
            let d = read_pfm_depth(&path, stage)?;
            check_size("depth map", stem, (d.width(), d.height()), size)?;
            Ok(d)
        })
        .collect()
}

fn read_gt_poses(path: &Path, frames: usize) -> Result<Trajectory> {
    let traj = read_trajectory(path)?;
    let indices: Vec<usize> = traj.entries.iter().map(|e| e.index).collect();
    if indices != (0..frames).collect::<Vec<_>>() {
        bail!(
            "{} must list frames 0..{} in order, one line each (found {} lines)",
            path.display(),
            frames,
            indices.len()
        );
    }
    Ok(traj)
}

pub fn load_sequence(dir: &Path) -> Result<SequenceBundle> {
    let frames = list_frames(dir)?;
    let stems: Vec<String> = frames.iter().map(|f| f.0.clone()).collect();
    let images = frames
        .iter()
        .map(|(_, p)| read_image(p).map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    let size = (images[0].width(), images[0].height());
    for (stem, img) in stems.iter().zip(&images) {
        check_size("image", stem, (img.width(), img.height()), size)?;
    }
    let mut depths = read_depth_dir(&dir.join(DEPTH_DIR), &stems, DepthStage::AffineInvariant, size)?;

    let mask_dir = dir.join(MASK_DIR);
    let sky_masked = mask_dir.is_dir();
    if sky_masked {
        for (stem, d) in stems.iter().zip(depths.iter_mut()) {
            let path = mask_dir.join(format!("{stem}.png"));
            if !path.is_file() {
                bail!("missing sky mask for frame '{stem}' (expected {})", path.display());
            }
            let (w, h, keep) = read_mask(&path)?;
            check_size("sky mask", stem, (w, h), size)?;
            d.apply_mask(&keep)?;
        }
    }

    let mut gt = GroundTruth::default();
    let poses_path = dir.join(GT_POSES);
    if poses_path.is_file() {
        let traj = read_gt_poses(&poses_path, stems.len())?;
        gt.poses = Some(traj.poses());
        gt.trajectory = Some(traj);
    }
    let intr_path = dir.join(GT_INTRINSICS);
    if intr_path.is_file() {
        let intr: GtIntrinsics = recon_core::io::read_json(&intr_path)?;
        if !(intr.fx > 0.0 && intr.fy > 0.0) {
            bail!("{}: focal lengths must be positive", intr_path.display());
        }
        if (intr.fx - intr.fy).abs() > 1e-9 * intr.fx {
            log::warn!("ground-truth fx and fy differ; fx is used for evaluation");
        }
        gt.intrinsics = Some(intr);
    }
    let gt_depth_dir = dir.join(GT_DEPTH_DIR);
    if gt_depth_dir.is_dir() {
        gt.depths = Some(read_depth_dir(&gt_depth_dir, &stems, DepthStage::ScaleConsistent, size)?);
    }
    Ok(SequenceBundle {
        stems,
        images,
        depths,
        sky_masked,
        gt,
    })
}
