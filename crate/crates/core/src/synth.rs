//! Analytic scenes with exact signed distances and labels, a sphere-tracing
//! depth renderer, a depth noise model and camera trajectories.
//!
//! Signed distance is positive outside solids. A plane is solid on the side
//! opposite its normal, so a room is a set of inward-facing planes.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthFrame, Intrinsics, Pose, Ray};
use crate::semantics::LabelFrame;
use crate::volume::{VolumeConfig, VoxelVolume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Free half-space `normal . p >= offset`; `normal` need not be unit.
    Plane { normal: [f64; 3], offset: f64 },
    Sphere { center: [f64; 3], radius: f64 },
    /// Axis-aligned box.
    Box { center: [f64; 3], half_extents: [f64; 3] },
}

impl Shape {
    pub fn sdf(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Shape::Plane { normal, offset } => {
                let n = Vector3::from(*normal);
                let len = n.norm();
                (n.dot(p) - offset) / len
            }
            Shape::Sphere { center, radius } => (p - Vector3::from(*center)).norm() - radius,
            Shape::Box { center, half_extents } => {
                let q = (p - Vector3::from(*center)).abs() - Vector3::from(*half_extents);
                q.map(|c| c.max(0.0)).norm() + q.max().min(0.0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Shape::Plane { normal, offset } => {
                Vector3::from(*normal).norm() > 0.0 && normal.iter().chain([offset]).all(|c| c.is_finite())
            }
            Shape::Sphere { center, radius } => *radius > 0.0 && center.iter().all(|c| c.is_finite()),
            Shape::Box { center, half_extents } => {
                half_extents.iter().all(|&h| h > 0.0) && center.iter().all(|c| c.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid primitive {self:?}")))
        }
    }
}

/// Unknown keys are rejected by [`Shape`], which sees every key but `class_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    pub class_id: u8,
}

/// Min-union of primitives.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
}

impl AnalyticScene {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::Config("scene has no primitives".into()));
        }
        for p in &primitives {
            p.shape.validate()?;
            if p.class_id == 0 {
                return Err(Error::Config("primitive class ids start at 1".into()));
            }
        }
        Ok(Self { primitives })
    }

    pub fn class_count(&self) -> u16 {
        self.primitives.iter().map(|p| u16::from(p.class_id)).max().unwrap_or(0)
    }

    pub fn sdf(&self, p: &Vector3<f64>) -> f64 {
        self.sdf_label(p).0
    }

    /// Scene distance and the class of the nearest primitive (ties to the
    /// lowest primitive index).
    pub fn sdf_label(&self, p: &Vector3<f64>) -> (f64, u8) {
        let mut best = (f64::INFINITY, 0u8);
        for prim in &self.primitives {
            let d = prim.shape.sdf(p);
            if d < best.0 {
                best = (d, prim.class_id);
            }
        }
        best
    }

    /// One sphere (radius `radius`, class 1) at `center`.
    pub fn sphere(center: [f64; 3], radius: f64) -> Self {
        Self { primitives: vec![Primitive { shape: Shape::Sphere { center, radius }, class_id: 1 }] }
    }

    /// Closed box room `[min, max]` with the floor as class 1 and the walls
    /// and ceiling as class 2.
    pub fn room(min: [f64; 3], max: [f64; 3]) -> Self {
        let plane = |normal: [f64; 3], offset: f64, class_id| Primitive { shape: Shape::Plane { normal, offset }, class_id };
        Self {
            primitives: vec![
                plane([0.0, 0.0, 1.0], min[2], 1),
                plane([0.0, 0.0, -1.0], -max[2], 2),
                plane([1.0, 0.0, 0.0], min[0], 2),
                plane([-1.0, 0.0, 0.0], -max[0], 2),
                plane([0.0, 1.0, 0.0], min[1], 2),
                plane([0.0, -1.0, 0.0], -max[1], 2),
            ],
        }
    }
}

pub const TRACE_EPSILON: f64 = 1e-6;
const MAX_TRACE_STEPS: usize = 2000;
const MAX_TRACE_DISTANCE: f64 = 100.0;

/// Distance along `ray` to the first surface, or `None`.
pub fn trace(scene: &AnalyticScene, ray: &Ray) -> Option<f64> {
    let mut t = 0.0;
    for _ in 0..MAX_TRACE_STEPS {
        let d = scene.sdf(&ray.at(t));
        if d < TRACE_EPSILON {
            return Some(t);
        }
        t += d;
        if t > MAX_TRACE_DISTANCE {
            return None;
        }
    }
    None
}

/// Renders z-depth and exact labels (score 1 on hits). Pixels without a hit
/// get depth 0, label 0 and score 0.
pub fn render(scene: &AnalyticScene, intrinsics: &Intrinsics, pose: &Pose) -> Result<(DepthFrame, LabelFrame)> {
    intrinsics.validate()?;
    let (w, h) = (intrinsics.width, intrinsics.height);
    let pixels: Vec<(f32, u8)> = (0..w as usize * h as usize)
        .into_par_iter()
        .map(|i| {
            let (u, v) = ((i % w as usize) as u32, (i / w as usize) as u32);
            let ray = Ray::through_pixel(u, v, intrinsics, pose).expect("pixel in bounds");
            match trace(scene, &ray) {
                Some(t) => {
                    let hit = ray.at(t);
                    let z = (pose.rotation().transpose() * ray.direction).z * t;
                    (z as f32, scene.sdf_label(&hit).1)
                }
                None => (0.0, 0),
            }
        })
        .collect();
    let depth = DepthFrame::new(w, h, pixels.iter().map(|p| p.0).collect())?;
    let labels: Vec<u8> = pixels.iter().map(|p| p.1).collect();
    let scores = labels.iter().map(|&l| if l > 0 { 1.0 } else { 0.0 }).collect();
    let frame = LabelFrame::new(w, h, labels, scores, scene.class_count())?;
    Ok((depth, frame))
}

pub fn render_depth(scene: &AnalyticScene, intrinsics: &Intrinsics, pose: &Pose) -> Result<DepthFrame> {
    Ok(render(scene, intrinsics, pose)?.0)
}

/// Depth noise: Gaussian jitter, gross outliers and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub gaussian_sigma: f64,
    /// Scale sigma by depth squared.
    pub depth_scaled: bool,
    pub outlier_rate: f64,
    pub outlier_magnitude: f64,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            gaussian_sigma: 0.0,
            depth_scaled: false,
            outlier_rate: 0.0,
            outlier_magnitude: 0.0,
            dropout_rate: 0.0,
            seed: 0,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let base = Self::none();
        match name {
            "none" => Ok(base),
            "default" => Ok(Self {
                gaussian_sigma: 0.005,
                outlier_rate: 0.005,
                outlier_magnitude: 0.1,
                dropout_rate: 0.01,
                ..base
            }),
            "heavy" => Ok(Self { gaussian_sigma: 0.01, outlier_rate: 0.01, outlier_magnitude: 0.1, ..base }),
            other => Err(Error::Config(format!("unknown noise preset '{other}' (none, default, heavy)"))),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let rate = |r: f64| (0.0..=1.0).contains(&r);
        if !(self.gaussian_sigma >= 0.0) || !(self.outlier_magnitude >= 0.0) {
            return Err(Error::Config("noise sigma and outlier magnitude must be nonnegative".into()));
        }
        if !rate(self.outlier_rate) || !rate(self.dropout_rate) {
            return Err(Error::Config("noise rates must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.gaussian_sigma == 0.0 && self.outlier_rate == 0.0 && self.dropout_rate == 0.0
    }
}

/// Applies `model` to the valid pixels of `depth`. The random stream is
/// determined by the model seed and `frame_index`. Pixels pushed to
/// non-positive depth become invalid.
pub fn apply_noise(depth: &DepthFrame, model: &NoiseModel, frame_index: u64) -> Result<DepthFrame> {
    model.validate()?;
    if model.is_identity() {
        return Ok(depth.clone());
    }
    let seed = model.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ frame_index;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = depth.clone();
    for d in out.data.iter_mut().filter(|d| **d > 0.0) {
        let z = f64::from(*d);
        let noisy = if rng.random_bool(model.dropout_rate) {
            0.0
        } else if rng.random_bool(model.outlier_rate) {
            if rng.random_bool(0.5) {
                z + model.outlier_magnitude
            } else {
                z - model.outlier_magnitude
            }
        } else {
            let sigma = if model.depth_scaled { model.gaussian_sigma * z * z } else { model.gaussian_sigma };
            z + sigma * normal.sample(&mut rng)
        };
        *d = if noisy > 0.0 { noisy as f32 } else { 0.0 };
    }
    Ok(out)
}

/// Ground-truth volume: clamped scene distance, weight 1 everywhere, and the
/// nearest primitive's class (score 1) inside the truncation band.
pub fn bake_gt_volume(scene: &AnalyticScene, config: &VolumeConfig) -> Result<VoxelVolume> {
    let mut config = config.clone();
    config.class_count = config.class_count.max(scene.class_count());
    let shell = VoxelVolume::new(config.clone())?;
    let trunc = config.truncation;
    let cells: Vec<(f32, u8)> = (0..shell.len())
        .into_par_iter()
        .map(|i| {
            let (d, class) = scene.sdf_label(&shell.voxel_center(i));
            let label = if d.abs() < trunc { class } else { 0 };
            (d.clamp(-trunc, trunc) as f32, label)
        })
        .collect();
    let n = cells.len();
    drop(shell);
    let tsdf: Vec<f32> = cells.iter().map(|c| c.0).collect();
    let label: Vec<u8> = cells.iter().map(|c| c.1).collect();
    let score: Vec<f32> = label.iter().map(|&l| if l > 0 { 1.0 } else { 0.0 }).collect();
    VoxelVolume::from_grids(config, &tsdf, &vec![1.0; n], &label, &score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Circles `target` at `radius`. Elevation oscillates between
    /// `±elevation_deg` twice per revolution.
    Orbit { target: [f64; 3], radius: f64, frames: usize, elevation_deg: f64 },
    /// Moves from `start` to `end` looking at `target`.
    Line { start: [f64; 3], end: [f64; 3], target: [f64; 3], frames: usize },
    /// Turns in place at `eye` for `turns` revolutions while the pitch
    /// oscillates between `±pitch_deg` `cycles` times.
    RoomScan { eye: [f64; 3], frames: usize, turns: f64, pitch_deg: f64, cycles: f64 },
}

const UP: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

impl TrajectorySpec {
    pub fn frames(&self) -> usize {
        match self {
            Self::Orbit { frames, .. } | Self::Line { frames, .. } | Self::RoomScan { frames, .. } => *frames,
        }
    }

    pub fn with_frames(mut self, n: usize) -> Self {
        match &mut self {
            Self::Orbit { frames, .. } | Self::Line { frames, .. } | Self::RoomScan { frames, .. } => *frames = n,
        }
        self
    }
}

/// Camera-to-world poses for `spec`, with z up.
pub fn trajectory(spec: &TrajectorySpec) -> Result<Vec<Pose>> {
    let n = spec.frames();
    if n == 0 {
        return Err(Error::Config("trajectory needs at least one frame".into()));
    }
    let phase = |i: usize| i as f64 / n as f64;
    match spec {
        TrajectorySpec::Orbit { target, radius, elevation_deg, .. } => {
            if !(*radius > 0.0) || !(elevation_deg.abs() < 89.0) {
                return Err(Error::Config("orbit needs radius > 0 and |elevation| < 89 degrees".into()));
            }
            let target = Vector3::from(*target);
            (0..n)
                .map(|i| {
                    let az = std::f64::consts::TAU * phase(i);
                    let el = elevation_deg.to_radians() * (2.0 * az).sin();
                    let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                    Pose::look_at(target + dir * *radius, target, UP)
                })
                .collect()
        }
        TrajectorySpec::Line { start, end, target, .. } => {
            let (s, e, target) = (Vector3::from(*start), Vector3::from(*end), Vector3::from(*target));
            (0..n)
                .map(|i| {
                    let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                    Pose::look_at(s + (e - s) * t, target, UP)
                })
                .collect()
        }
        TrajectorySpec::RoomScan { eye, turns, pitch_deg, cycles, .. } => {
            if !(pitch_deg.abs() < 89.0) {
                return Err(Error::Config("room scan pitch must stay below 89 degrees".into()));
            }
            let eye = Vector3::from(*eye);
            (0..n)
                .map(|i| {
                    let yaw = std::f64::consts::TAU * turns * phase(i);
                    let pitch = pitch_deg.to_radians() * (std::f64::consts::TAU * cycles * phase(i)).sin();
                    let dir = Vector3::new(pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin());
                    Pose::look_at(eye, eye + dir, UP)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::unproject;

    fn cam() -> Intrinsics {
        Intrinsics::from_fov(65, 49, 60.0).unwrap()
    }

    fn facing_z(eye: [f64; 3]) -> Pose {
        let e = Vector3::from(eye);
        Pose::look_at(e, e + Vector3::z(), Vector3::new(0.0, -1.0, 0.0)).unwrap()
    }

    #[test]
    fn principal_pixel_depths() {
        let k = cam();
        let pose = facing_z([0.0; 3]);
        let (u, v) = (k.cx as u32, k.cy as u32);
        let plane = AnalyticScene::new(vec![Primitive {
            shape: Shape::Plane { normal: [0.0, 0.0, -1.0], offset: -2.0 },
            class_id: 3,
        }])
        .unwrap();
        let (d, l) = render(&plane, &k, &pose).unwrap();
        assert!((d.get(u, v) - 2.0).abs() < 1e-5);
        assert_eq!(l.labels[(v * k.width + u) as usize], 3);
        let sphere = AnalyticScene::sphere([0.0, 0.0, 2.0], 0.5);
        let d = render_depth(&sphere, &k, &pose).unwrap();
        assert!((d.get(u, v) - 1.5).abs() < 1e-5);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn hits_lie_on_surface() {
        let k = cam();
        let scene = AnalyticScene::new(vec![
            Primitive { shape: Shape::Sphere { center: [0.2, 0.0, 2.0], radius: 0.4 }, class_id: 1 },
            Primitive { shape: Shape::Box { center: [-0.4, 0.1, 2.5], half_extents: [0.3, 0.2, 0.3] }, class_id: 2 },
        ])
        .unwrap();
        let pose = facing_z([0.0; 3]);
        let d = render_depth(&scene, &k, &pose).unwrap();
        let mut hits = 0;
        for v in 0..k.height {
            for u in 0..k.width {
                let z = d.get(u, v);
                if z > 0.0 {
                    hits += 1;
                    let p = unproject((f64::from(u), f64::from(v)), f64::from(z), &k, &pose).unwrap();
                    assert!(scene.sdf(&p).abs() < 1e-4);
                }
            }
        }
        assert!(hits > 100);
    }

    #[test]
    fn box_sdf_is_exact() {
        let b = Shape::Box { center: [0.0; 3], half_extents: [1.0, 2.0, 3.0] };
        assert_eq!(b.sdf(&Vector3::new(2.0, 0.0, 0.0)), 1.0);
        assert_eq!(b.sdf(&Vector3::new(0.0, 0.0, 0.0)), -1.0);
        assert!((b.sdf(&Vector3::new(2.0, 3.0, 0.0)) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn noise_identity_and_determinism() {
        let depth = DepthFrame::new(4, 1, vec![1.0, 0.0, 2.0, 3.0]).unwrap();
        assert_eq!(apply_noise(&depth, &NoiseModel::none(), 0).unwrap(), depth);
        let m = NoiseModel::preset("heavy").unwrap().with_seed(9);
        let a = apply_noise(&depth, &m, 3).unwrap();
        assert_eq!(a, apply_noise(&depth, &m, 3).unwrap());
        assert_ne!(a, apply_noise(&depth, &m, 4).unwrap());
        assert_eq!(a.data[1], 0.0);
    }

    #[test]
    fn noise_sigma_statistics() {
        let n = 100_000;
        let depth = DepthFrame::new(n as u32, 1, vec![2.0; n]).unwrap();
        let m = NoiseModel { gaussian_sigma: 0.01, seed: 5, ..NoiseModel::none() };
        let noisy = apply_noise(&depth, &m, 0).unwrap();
        let diffs: Vec<f64> = noisy.data.iter().map(|&d| f64::from(d) - 2.0).collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((0.0097..=0.0103).contains(&std), "{std}");
    }

    #[test]
    fn orbit_distance_and_smoothness() {
        let spec = TrajectorySpec::Orbit { target: [0.1, 0.2, 0.3], radius: 2.0, frames: 8, elevation_deg: 40.0 };
        let poses = trajectory(&spec).unwrap();
        assert_eq!(poses.len(), 8);
        for p in &poses {
            assert!(((p.translation() - Vector3::new(0.1, 0.2, 0.3)).norm() - 2.0).abs() < 1e-9);
        }
        for w in poses.windows(2) {
            assert!(w[0].angle_to(&w[1]) < std::f64::consts::FRAC_PI_2);
        }
    }

    #[test]
    fn bake_sign_convention() {
        let scene = AnalyticScene::sphere([0.5, 0.5, 0.5], 0.3);
        let cfg = VolumeConfig::new([11, 11, 11], 0.1, [0.0; 3], 0.2);
        let vol = bake_gt_volume(&scene, &cfg).unwrap();
        assert!((vol.tsdf(vol.index(5, 5, 5)) + 0.2).abs() < 1e-3);
        assert!((vol.tsdf(vol.index(0, 0, 0)) - 0.2).abs() < 1e-3);
        assert_eq!(vol.label(vol.index(5, 5, 8)), 1);
        assert!(vol.tsdf(vol.index(5, 5, 8)).abs() < 0.05);
        vol.check_invariants().unwrap();
    }
}
