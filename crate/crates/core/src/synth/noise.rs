//! Deterministic 3D value noise.

/// Hash of an integer lattice point and a seed to `[0, 1)`.
fn lattice(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [x, y, z] {
        h ^= v as u64;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
        h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 29;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Trilinear value noise with smoothstep easing, in `[0, 1)`.
pub(crate) fn value_noise(seed: u64, p: [f64; 3]) -> f64 {
    let f = p.map(f64::floor);
    let i = f.map(|v| v as i64);
    let t = [0, 1, 2].map(|a| smoothstep(p[a] - f[a]));
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = (if dx == 1 { t[0] } else { 1.0 - t[0] })
                    * (if dy == 1 { t[1] } else { 1.0 - t[1] })
                    * (if dz == 1 { t[2] } else { 1.0 - t[2] });
                acc += w * lattice(seed, i[0] + dx, i[1] + dy, i[2] + dz);
            }
        }
    }
    acc
}
