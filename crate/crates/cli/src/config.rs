//! Run settings: a JSON document overridable from the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use recon_core::OptimizeConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSettings {
    /// Voxel edge length; `None` picks the scene extent over 128.
    pub voxel_size: Option<f64>,
}

/// Everything that influences a run's outputs besides the input data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub optimize: OptimizeConfig,
    pub fusion: FusionSettings,
    pub export_dense_trajectory: bool,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub settings: Settings,
}

impl RunConfig {
    /// Fails when the input directory does not exist or a setting is out of range.
    pub fn new(input: impl Into<PathBuf>, output: impl Into<PathBuf>, settings: Settings) -> Result<Self> {
        let input = input.into();
        if !input.is_dir() {
            bail!("input directory {} does not exist", input.display());
        }
        if let Some(v) = settings.fusion.voxel_size {
            if !(v.is_finite() && v > 0.0) {
                bail!("voxel size must be positive, got {v}");
            }
        }
        if !(settings.optimize.schedule_scale.is_finite() && settings.optimize.schedule_scale > 0.0) {
            bail!("schedule scale must be positive");
        }
        Ok(Self {
            input,
            output: output.into(),
            settings,
        })
    }
}
