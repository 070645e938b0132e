use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{ReconError, Result};
use crate::fusion::{Trajectory, TrajectoryEntry};

/// Shortest decimal rendering with at most `digits` significant digits,
/// in the manner of C's `%g`.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    }
}

/// One line `index tx ty tz qx qy qz qw` per entry, 9 significant digits.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut out = String::new();
    for e in &traj.entries {
        out.push_str(&e.index.to_string());
        for v in e.translation.iter().chain(&e.rotation) {
            out.push(' ');
            out.push_str(&format_significant(*v, 9));
        }
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

/// Parses the format written by [`write_trajectory`]; `#` lines are comments.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| ReconError::format(path, "not UTF-8"))?;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || ReconError::format(path, format!("line {}: expected 8 numeric fields", n + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(bad());
        }
        let index: usize = fields[0]
            .parse()
            .or_else(|_| fields[0].parse::<f64>().map(|v| v as usize))
            .map_err(|_| bad())?;
        let mut v = [0.0; 7];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| bad())?;
        }
        // kept as written so re-export reproduces the text; poses() normalizes
        let q = [v[3], v[4], v[5], v[6]];
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(ReconError::format(path, format!("line {}: degenerate quaternion", n + 1)));
        }
        entries.push(TrajectoryEntry {
            index,
            translation: [v[0], v[1], v[2]],
            rotation: q,
        });
    }
    Ok(Trajectory { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PoseMatrix;

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(0.0, 9), "0");
        assert_eq!(format_significant(-0.0, 9), "0");
        assert_eq!(format_significant(1.0, 9), "1");
        assert_eq!(format_significant(0.5, 9), "0.5");
        assert_eq!(format_significant(std::f64::consts::PI, 9), "3.14159265");
        assert_eq!(format_significant(-123456.789012, 9), "-123456.789");
        assert_eq!(format_significant(1.5e-7, 9), "1.5e-7");
        assert_eq!(format_significant(2.0e12, 9), "2e12");
    }

    #[test]
    fn identity_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.txt");
        let t = Trajectory::from_poses(&[0], &[PoseMatrix::identity()]).unwrap();
        write_trajectory(&p, &t).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "0 0 0 0 0 0 0 1\n");
        assert_eq!(read_trajectory(&p).unwrap(), t);
    }

    #[test]
    fn reparse_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.txt");
        let t = Trajectory {
            entries: vec![TrajectoryEntry {
                index: 4,
                translation: [0.123456789123, -2.5, 1e-9],
                rotation: [0.0, 0.6, 0.0, 0.8],
            }],
        };
        write_trajectory(&p, &t).unwrap();
        let first = std::fs::read(&p).unwrap();
        let back = read_trajectory(&p).unwrap();
        assert!((back.entries[0].translation[0] - 0.123456789).abs() < 1e-15);
        write_trajectory(&p, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first);
    }
}
