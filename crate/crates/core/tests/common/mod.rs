#![allow(dead_code)]

use nalgebra::Vector3;
use semfuse::fusion::{ClassicPredictor, Fuser, FusionConfig};
use semfuse::geometry::{Intrinsics, Pose};
use semfuse::meshing::{marching_cubes, TriMesh};
use semfuse::synth::{self, AnalyticScene, NoiseModel, TrajectorySpec};
use semfuse::volume::{StoragePrecision, VolumeConfig, VoxelVolume};

pub const VOXEL: f64 = 0.01;
pub const TRUNCATION: f64 = 0.04;
pub const SPHERE_RADIUS: f64 = 0.5;

/// Prints one verdict line per criterion and fails the test on a miss.
pub fn verdict(id: &str, ok: bool, detail: &str) {
    println!("criterion {id}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

pub struct Scenario {
    pub scene: AnalyticScene,
    pub config: VolumeConfig,
    pub intrinsics: Intrinsics,
    pub poses: Vec<Pose>,
}

pub fn sphere_scenario(resolution: u32, frames: usize) -> Scenario {
    let scene = AnalyticScene::sphere([0.0; 3], SPHERE_RADIUS);
    let m = SPHERE_RADIUS + 0.1;
    let config = VolumeConfig::covering(Vector3::repeat(-m), Vector3::repeat(m), VOXEL, TRUNCATION)
        .with_class_count(scene.class_count());
    let spec = TrajectorySpec::Orbit { target: [0.0; 3], radius: 1.5, frames, elevation_deg: 60.0 };
    Scenario {
        scene,
        config,
        intrinsics: Intrinsics::from_fov(resolution, resolution, 60.0).unwrap(),
        poses: synth::trajectory(&spec).unwrap(),
    }
}

/// Floor (class 1) plus walls and ceiling (class 2), scanned from inside.
pub fn room_scenario(resolution: u32, frames: usize) -> Scenario {
    let (min, max) = ([-1.5, -1.5, 0.0], [1.5, 1.5, 1.5]);
    let scene = AnalyticScene::room(min, max);
    let pad = 0.08;
    let config = VolumeConfig::covering(
        Vector3::from(min).add_scalar(-pad),
        Vector3::from(max).add_scalar(pad),
        0.01,
        0.03,
    )
    .with_class_count(2);
    let spec = TrajectorySpec::RoomScan { eye: [0.0, 0.0, 0.75], frames, turns: 2.0, pitch_deg: 60.0, cycles: 3.0 };
    Scenario {
        scene,
        config,
        intrinsics: Intrinsics::from_fov(resolution, resolution, 70.0).unwrap(),
        poses: synth::trajectory(&spec).unwrap(),
    }
}

impl Scenario {
    pub fn with_precision(mut self, p: StoragePrecision) -> Self {
        self.config = self.config.with_precision(p);
        self
    }

    /// Renders every pose, applies `noise`, and fuses with the classic
    /// predictor. Labels are fused when `semantics` is set.
    pub fn fuse(&self, noise: &NoiseModel, semantics: bool) -> VoxelVolume {
        let mut vol = VoxelVolume::new(self.config.clone()).unwrap();
        let mut fuser = Fuser::new(FusionConfig { semantics, ..FusionConfig::default() }).unwrap();
        let predictor = ClassicPredictor::new(self.config.truncation);
        for (i, pose) in self.poses.iter().enumerate() {
            let (clean, labels) = synth::render(&self.scene, &self.intrinsics, pose).unwrap();
            let depth = synth::apply_noise(&clean, noise, i as u64).unwrap();
            fuser.fuse_frame(&mut vol, &depth, Some(&labels), &self.intrinsics, pose, &predictor).unwrap();
        }
        vol
    }

    pub fn gt_volume(&self) -> VoxelVolume {
        synth::bake_gt_volume(&self.scene, &self.config).unwrap()
    }

    pub fn gt_mesh(&self) -> TriMesh {
        marching_cubes(&self.gt_volume(), 0.0)
    }
}

pub fn vertex_radius_rms(mesh: &TriMesh, center: Vector3<f64>, radius: f64) -> f64 {
    let n = mesh.vertices.len() as f64;
    let ss: f64 = (0..mesh.vertices.len() as u32).map(|i| ((mesh.vertex(i) - center).norm() - radius).powi(2)).sum();
    (ss / n).sqrt()
}

/// The noise of the classic-fusion analog: 1 cm Gaussian plus 1% outliers
/// at 10 cm.
pub fn table_noise(seed: u64) -> NoiseModel {
    NoiseModel { gaussian_sigma: 0.01, outlier_rate: 0.01, outlier_magnitude: 0.1, seed, ..NoiseModel::none() }
}
