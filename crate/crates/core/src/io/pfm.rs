use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{ReconError, Result};
use crate::raster::{DepthMap, DepthStage};

/// Single-channel PFM as `(width, height, row-major top-to-bottom values)`.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = read_bytes(path)?;
    let bad = |msg: &str| ReconError::format(path, msg.to_string());
    // three whitespace-terminated header tokens after the magic line
    let mut tokens = Vec::new();
    let mut pos = 0usize;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    match tokens[0] {
        "Pf" => {}
        "PF" => return Err(bad("three-channel PFM is not a depth map")),
        _ => return Err(bad("missing Pf magic")),
    }
    let w: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    if w == 0 || h == 0 || scale == 0.0 || !scale.is_finite() {
        return Err(bad("degenerate header"));
    }
    let need = w * h * 4;
    if bytes.len() < pos + need {
        return Err(bad("truncated raster"));
    }
    let raster = &bytes[pos..pos + need];
    let mut out = vec![0f32; w * h];
    for row in 0..h {
        // rows are stored bottom-to-top
        let dst = (h - 1 - row) * w;
        for x in 0..w {
            let o = (row * w + x) * 4;
            let b = [raster[o], raster[o + 1], raster[o + 2], raster[o + 3]];
            out[dst + x] = if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        }
    }
    Ok((w, h, out))
}

/// Writes a little-endian single-channel PFM.
pub fn write_pfm(path: &Path, width: usize, height: usize, values: &[f32]) -> Result<()> {
    if values.len() != width * height {
        return Err(ReconError::invalid("PFM raster size does not match dimensions"));
    }
    let mut bytes = format!("Pf\n{width} {height}\n-1\n").into_bytes();
    bytes.reserve(values.len() * 4);
    for row in (0..height).rev() {
        for v in &values[row * width..(row + 1) * width] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_bytes(path, &bytes)
}

/// Reads a depth map; non-finite and non-positive entries become invalid.
pub fn read_pfm_depth(path: &Path, stage: DepthStage) -> Result<DepthMap> {
    let (w, h, v) = read_pfm(path)?;
    DepthMap::new(w, h, v.into_iter().map(f64::from).collect(), stage)
}

/// Writes a depth map, storing invalid pixels as `+inf`.
pub fn write_pfm_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let vals: Vec<f32> = depth
        .values()
        .iter()
        .zip(depth.validity())
        .map(|(v, ok)| if *ok { *v as f32 } else { f32::INFINITY })
        .collect();
    write_pfm(path, depth.width(), depth.height(), &vals)
}
