use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::noise::value_noise;
use crate::error::{ReconError, Result};
use crate::geometry::{Intrinsics, PoseMatrix};
use crate::raster::{DepthMap, DepthStage, ImageBuffer};

/// Procedural albedo: base color modulated by two octaves of value noise and
/// soft sinusoidal stripes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub seed: u64,
    pub base: [f64; 3],
    /// Noise cell size (scene units).
    pub cell: f64,
    /// Stripe period (scene units).
    pub period: f64,
    /// Modulation depth in `[0, 1]`.
    pub contrast: f64,
}

impl Surface {
    fn albedo(&self, p: &Vector3<f64>) -> [f64; 3] {
        let q = [p.x / self.cell, p.y / self.cell, p.z / self.cell];
        let n = 0.65 * value_noise(self.seed, q)
            + 0.35 * value_noise(self.seed.wrapping_add(1), q.map(|v| 2.0 * v + 17.0));
        let w = std::f64::consts::TAU / self.period;
        let stripes = 0.5 + ((w * p.x).sin() + (w * p.y).sin() + (w * p.z).sin()) / 6.0;
        let m = 1.0 - self.contrast + self.contrast * (0.7 * n + 0.3 * stripes);
        // per-channel noise keeps the texture from being a tinted grayscale
        let tint = [0, 1, 2].map(|c| 0.85 + 0.3 * value_noise(self.seed.wrapping_add(10 + c as u64), q));
        [0, 1, 2].map(|c| self.base[c] * m * tint[c])
    }
}

/// Scene primitives in world coordinates (y points down, like the cameras).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    /// The plane `n·x = offset`; free space is where `n·x > offset`.
    Plane {
        normal: [f64; 3],
        offset: f64,
        surface: Surface,
    },
    Box {
        min: [f64; 3],
        max: [f64; 3],
        surface: Surface,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
        surface: Surface,
    },
}

struct Hit {
    t: f64,
    normal: Vector3<f64>,
}

impl Primitive {
    fn surface(&self) -> &Surface {
        match self {
            Primitive::Plane { surface, .. } | Primitive::Box { surface, .. } | Primitive::Sphere { surface, .. } => surface,
        }
    }

    fn contains(&self, p: &Vector3<f64>) -> bool {
        match *self {
            Primitive::Plane { normal, offset, .. } => Vector3::from(normal).dot(p) <= offset,
            Primitive::Box { min, max, .. } => (0..3).all(|a| p[a] >= min[a] && p[a] <= max[a]),
            Primitive::Sphere { center, radius, .. } => (p - Vector3::from(center)).norm() <= radius,
        }
    }

    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<Hit> {
        match *self {
            Primitive::Plane { normal, offset, .. } => {
                let n = Vector3::from(normal);
                let nd = n.dot(d);
                if nd >= 0.0 {
                    return None;
                }
                let t = (offset - n.dot(o)) / nd;
                (t > 0.0).then_some(Hit { t, normal: n })
            }
            Primitive::Sphere { center, radius, .. } => {
                let oc = o - Vector3::from(center);
                let a = d.norm_squared();
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let t = (-b - disc.sqrt()) / a;
                if t <= 0.0 {
                    return None;
                }
                Some(Hit {
                    t,
                    normal: (oc + d * t) / radius,
                })
            }
            Primitive::Box { min, max, .. } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                let mut axis = 0;
                let mut sign = 0.0;
                for a in 0..3 {
                    if d[a] == 0.0 {
                        if o[a] < min[a] || o[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let (mut ta, mut tb) = ((min[a] - o[a]) / d[a], (max[a] - o[a]) / d[a]);
                    let mut s = -1.0;
                    if ta > tb {
                        std::mem::swap(&mut ta, &mut tb);
                        s = 1.0;
                    }
                    if ta > t0 {
                        t0 = ta;
                        axis = a;
                        sign = s;
                    }
                    t1 = t1.min(tb);
                }
                if t0 > t1 || t0 <= 0.0 {
                    return None;
                }
                let mut normal = Vector3::zeros();
                normal[axis] = sign;
                Some(Hit { t: t0, normal })
            }
        }
    }
}

/// Camera path: an arc around `target` at fixed height, always looking at
/// `target`, optionally followed by in-place yaw-only frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub target: [f64; 3],
    pub radius: f64,
    /// Camera height above `target` (world `−y`).
    pub height: f64,
    pub start_deg: f64,
    pub step_deg: f64,
    pub arc_frames: usize,
    /// Extra frames rotating in place by `step_deg` each.
    pub pure_rotation_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Ground-truth focal length (pixels).
    pub focal: f64,
    pub primitives: Vec<Primitive>,
    pub trajectory: TrajectorySpec,
    /// Direction towards the light.
    pub light: [f64; 3],
    pub background: [f64; 3],
    /// Color samples per pixel side.
    pub supersample: usize,
}

impl Default for SceneSpec {
    /// Ground plane, two boxes and two spheres seen from a 20-frame arc at
    /// 64×48 with a 60 px focal.
    fn default() -> Self {
        let surface = |seed: u64, base: [f64; 3], cell: f64| Surface {
            seed,
            base,
            cell,
            period: 1.3,
            contrast: 0.8,
        };
        Self {
            width: 64,
            height: 48,
            focal: 60.0,
            primitives: vec![
                Primitive::Plane {
                    normal: [0.0, -1.0, 0.0],
                    offset: 0.0,
                    surface: surface(11, [0.85, 0.8, 0.7], 0.45),
                },
                Primitive::Box {
                    min: [-1.3, -0.8, -0.5],
                    max: [-0.3, 0.0, 0.4],
                    surface: surface(23, [0.9, 0.45, 0.35], 0.25),
                },
                Primitive::Box {
                    min: [0.6, -0.55, -1.3],
                    max: [1.4, 0.0, -0.5],
                    surface: surface(37, [0.35, 0.6, 0.9], 0.25),
                },
                Primitive::Sphere {
                    center: [0.6, -0.45, 0.8],
                    radius: 0.45,
                    surface: surface(41, [0.5, 0.85, 0.4], 0.2),
                },
                Primitive::Sphere {
                    center: [-0.5, -0.35, -1.4],
                    radius: 0.35,
                    surface: surface(53, [0.95, 0.85, 0.3], 0.2),
                },
            ],
            trajectory: TrajectorySpec {
                target: [0.0, 0.0, 0.0],
                radius: 3.5,
                height: 3.0,
                start_deg: -30.0,
                step_deg: 3.0,
                arc_frames: 20,
                pure_rotation_frames: 0,
            },
            light: [0.4, -1.0, -0.3],
            background: [0.6, 0.7, 0.9],
            supersample: 3,
        }
    }
}

fn look_at(forward: &Vector3<f64>) -> Matrix3<f64> {
    let z = forward.normalize();
    let down = Vector3::new(0.0, 1.0, 0.0);
    let x = down.cross(&z).normalize();
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

impl SceneSpec {
    pub fn frame_count(&self) -> usize {
        self.trajectory.arc_frames + self.trajectory.pure_rotation_frames
    }

    pub fn intrinsics(&self) -> Result<Intrinsics> {
        Intrinsics::from_focal(self.focal, self.width, self.height)
    }

    /// Ground-truth camera-to-world poses.
    pub fn poses(&self) -> Vec<PoseMatrix> {
        let tr = &self.trajectory;
        let target = Vector3::from(tr.target);
        let eye_at = |deg: f64| {
            let a = deg.to_radians();
            target + Vector3::new(tr.radius * a.sin(), -tr.height, -tr.radius * a.cos())
        };
        let mut out = Vec::with_capacity(self.frame_count());
        for k in 0..tr.arc_frames {
            let eye = eye_at(tr.start_deg + tr.step_deg * k as f64);
            out.push(PoseMatrix::from_parts(&look_at(&(target - eye)), &eye));
        }
        let last_deg = tr.start_deg + tr.step_deg * tr.arc_frames.saturating_sub(1) as f64;
        let eye = eye_at(last_deg);
        for k in 1..=tr.pure_rotation_frames {
            let yaw = (tr.step_deg * k as f64).to_radians();
            let (s, c) = yaw.sin_cos();
            let ry = Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
            out.push(PoseMatrix::from_parts(&look_at(&(ry * (target - eye))), &eye));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 || !(self.focal > 0.0) {
            return Err(ReconError::InvalidScene("bad image geometry".into()));
        }
        if self.frame_count() == 0 || self.supersample == 0 {
            return Err(ReconError::InvalidScene("scene needs frames and samples".into()));
        }
        for p in &self.primitives {
            let s = p.surface();
            if !(s.cell > 0.0 && s.period > 0.0 && (0.0..=1.0).contains(&s.contrast)) {
                return Err(ReconError::InvalidScene("bad surface parameters".into()));
            }
            if s.base.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(ReconError::InvalidScene("base colors must lie in [0, 1]".into()));
            }
            match *p {
                Primitive::Sphere { radius, .. } if !(radius > 0.0) => {
                    return Err(ReconError::InvalidScene("sphere radius must be positive".into()))
                }
                Primitive::Box { min, max, .. } if (0..3).any(|a| min[a] >= max[a]) => {
                    return Err(ReconError::InvalidScene("box min must be below max".into()))
                }
                Primitive::Plane { normal, .. } if (Vector3::from(normal).norm() - 1.0).abs() > 1e-9 => {
                    return Err(ReconError::InvalidScene("plane normal must be unit".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn trace(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Vector3<f64>, &Primitive)> {
        let mut best: Option<(f64, Vector3<f64>, &Primitive)> = None;
        for p in &self.primitives {
            if let Some(h) = p.intersect(o, d) {
                if best.as_ref().is_none_or(|b| h.t < b.0) {
                    best = Some((h.t, h.normal, p));
                }
            }
        }
        best
    }
}

/// Ray-casts frame `frame`: z-depth of the nearest hit (invalid where a ray
/// escapes) and a supersampled, diffusely shaded color image.
pub fn render_scene(scene: &SceneSpec, frame: usize) -> Result<(ImageBuffer, DepthMap)> {
    scene.validate()?;
    if frame >= scene.frame_count() {
        return Err(ReconError::invalid(format!("frame {frame} is outside the trajectory")));
    }
    let pose = scene.poses()[frame];
    let eye = pose.translation();
    if scene.primitives.iter().any(|p| p.contains(&eye)) {
        return Err(ReconError::InvalidScene(format!("camera {frame} is inside a primitive")));
    }
    let rot = pose.rotation();
    let intr = scene.intrinsics()?;
    let (w, h) = (scene.width, scene.height);
    let light = Vector3::from(scene.light).normalize();
    let ss = scene.supersample;
    let ray = |u: f64, v: f64| rot * Vector3::new((u - intr.cx()) / intr.focal(), (v - intr.cy()) / intr.focal(), 1.0);
    let mut depth = Vec::with_capacity(w * h);
    let mut color = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let center = scene.trace(&eye, &ray(x as f64, y as f64));
            depth.push(center.map_or(f64::NAN, |c| c.0));
            let mut acc = [0.0; 3];
            for sy in 0..ss {
                for sx in 0..ss {
                    let du = (sx as f64 + 0.5) / ss as f64 - 0.5;
                    let dv = (sy as f64 + 0.5) / ss as f64 - 0.5;
                    let d = ray(x as f64 + du, y as f64 + dv);
                    let rgb = match scene.trace(&eye, &d) {
                        Some((t, n, prim)) => {
                            let p = eye + d * t;
                            let shade = 0.55 + 0.45 * n.dot(&light).max(0.0);
                            prim.surface().albedo(&p).map(|c| c * shade)
                        }
                        None => scene.background,
                    };
                    for c in 0..3 {
                        acc[c] += rgb[c];
                    }
                }
            }
            let n = (ss * ss) as f64;
            color.extend(acc.iter().map(|c| (c / n).clamp(0.0, 1.0)));
        }
    }
    Ok((
        ImageBuffer::new(w, h, 3, color)?,
        DepthMap::new(w, h, depth, DepthStage::ScaleConsistent)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::relative_angle;

    fn surface() -> Surface {
        Surface {
            seed: 1,
            base: [0.8; 3],
            cell: 0.3,
            period: 1.0,
            contrast: 0.8,
        }
    }

    fn wall_scene(eye_z: f64) -> SceneSpec {
        // a camera at the origin looking down +z at the plane z = 2
        SceneSpec {
            width: 16,
            height: 12,
            focal: 13.0,
            primitives: vec![Primitive::Plane {
                normal: [0.0, 0.0, -1.0],
                offset: -2.0,
                surface: surface(),
            }],
            trajectory: TrajectorySpec {
                target: [0.0, 0.0, 2.0 + eye_z],
                radius: 2.0,
                height: 0.0,
                start_deg: 0.0,
                step_deg: 0.0,
                arc_frames: 1,
                pure_rotation_frames: 0,
            },
            light: [0.0, 0.0, -1.0],
            background: [0.0; 3],
            supersample: 1,
        }
    }

    #[test]
    fn fronto_parallel_plane_depth() {
        for (shift, expect) in [(0.0, 2.0), (0.5, 1.5)] {
            let scene = wall_scene(shift);
            assert!((scene.poses()[0].translation() - Vector3::new(0.0, 0.0, shift)).norm() < 1e-15);
            let (_, d) = render_scene(&scene, 0).unwrap();
            assert!(d.values().iter().all(|v| (v - expect).abs() < 1e-12));
        }
    }

    #[test]
    fn sphere_center_depth() {
        let mut scene = wall_scene(0.0);
        scene.primitives.push(Primitive::Sphere {
            center: [0.0, 0.0, 1.2],
            radius: 0.3,
            surface: surface(),
        });
        let (_, d) = render_scene(&scene, 0).unwrap();
        // principal point is pixel (8, 6)
        assert!((d.get(8, 6) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn camera_inside_is_rejected() {
        let mut scene = wall_scene(0.0);
        scene.primitives.push(Primitive::Sphere {
            center: [0.0, 0.0, 0.0],
            radius: 0.5,
            surface: surface(),
        });
        assert!(matches!(render_scene(&scene, 0), Err(ReconError::InvalidScene(_))));
    }

    #[test]
    fn default_scene_is_fully_covered_and_smooth() {
        let scene = SceneSpec::default();
        let poses = scene.poses();
        assert_eq!(poses.len(), 20);
        for p in poses.windows(2) {
            assert!(relative_angle(&p[0], &p[1]).to_degrees() <= 5.0);
        }
        for f in [0, 19] {
            let (img, d) = render_scene(&scene, f).unwrap();
            assert_eq!(d.valid_count(), 64 * 48);
            let mean = img.data().iter().sum::<f64>() / img.data().len() as f64;
            let var = img.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / img.data().len() as f64;
            assert!(var > 1e-3, "texture must not be flat");
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let scene = SceneSpec::default();
        let s = serde_json::to_string(&scene).unwrap();
        assert_eq!(serde_json::from_str::<SceneSpec>(&s).unwrap(), scene);
    }
}
