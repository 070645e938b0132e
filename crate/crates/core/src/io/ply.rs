use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{ReconError, Result};
use crate::fusion::PointCloud;

/// Binary little-endian PLY with float32 `x y z` and, for colored clouds,
/// uchar `red green blue`.
pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let colored = cloud.colors.is_some();
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        cloud.len()
    );
    if colored {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");
    let mut bytes = header.into_bytes();
    for (i, p) in cloud.points.iter().enumerate() {
        for v in p {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        if let Some(c) = &cloud.colors {
            for v in c[i] {
                bytes.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    write_bytes(path, &bytes)
}

/// Reads clouds written by [`write_ply`].
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let bytes = read_bytes(path)?;
    let bad = |msg: &str| ReconError::format(path, msg.to_string());
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| bad("missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("non-ASCII header"))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing ply magic"));
    }
    let mut count = None;
    let mut props = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["format", "binary_little_endian", _] => {}
            ["format", ..] => return Err(bad("only binary_little_endian is supported")),
            ["element", "vertex", n] => count = Some(n.parse::<usize>().map_err(|_| bad("bad vertex count"))?),
            ["property", ty, name] => props.push((ty.to_string(), name.to_string())),
            _ => {}
        }
    }
    let count = count.ok_or_else(|| bad("missing vertex element"))?;
    let expected_xyz = [("float", "x"), ("float", "y"), ("float", "z")];
    let colored = match props.len() {
        3 => false,
        6 => true,
        _ => return Err(bad("unsupported vertex properties")),
    };
    for (i, (ty, name)) in expected_xyz.iter().enumerate() {
        if props[i].0 != *ty || props[i].1 != *name {
            return Err(bad("unsupported vertex properties"));
        }
    }
    let stride = if colored { 15 } else { 12 };
    let body = &bytes[end + marker.len()..];
    if body.len() < count * stride {
        return Err(bad("truncated vertex data"));
    }
    let mut points = Vec::with_capacity(count);
    let mut colors = colored.then(|| Vec::with_capacity(count));
    for i in 0..count {
        let o = i * stride;
        let f = |k: usize| f32::from_le_bytes(body[o + 4 * k..o + 4 * k + 4].try_into().unwrap()) as f64;
        points.push([f(0), f(1), f(2)]);
        if let Some(c) = colors.as_mut() {
            c.push([0, 1, 2].map(|k| body[o + 12 + k] as f64 / 255.0));
        }
    }
    Ok(PointCloud { points, colors })
}
