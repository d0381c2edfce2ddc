use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use semfuse::fusion::FusionConfig;
use semfuse::io::{self, DatasetConventions, DatasetWriter, RunConfig};
use semfuse::meshing::marching_cubes;
use semfuse::synth::{self, AnalyticScene, NoiseModel, Primitive, TrajectorySpec};
use semfuse::volume::VolumeConfig;
use semfuse::Intrinsics;

use crate::error::{CliError, CliResult};

pub const GT_MESH_FILE: &str = "gt_mesh.ply";
pub const SCENE_FILE: &str = "scene.toml";
pub const DEFAULT_MAX_RANGE: f64 = 10.0;

#[derive(clap::Args)]
pub struct Args {
    /// Scene description (TOML)
    #[arg(long)]
    scene: PathBuf,
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
    /// Override the trajectory frame count
    #[arg(long)]
    frames: Option<usize>,
    /// Noise preset: none, default or heavy
    #[arg(long)]
    noise: Option<String>,
    /// Noise seed
    #[arg(long)]
    seed: Option<u64>,
    /// Sensor range in meters; farther returns are written as missing
    #[arg(long, default_value_t = DEFAULT_MAX_RANGE)]
    max_range: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub width: u32,
    pub height: u32,
    pub hfov_deg: f64,
}

/// A preset name or a full noise table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Preset(String),
    Model(NoiseModel),
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Preset("default".into())
    }
}

impl NoiseSpec {
    fn resolve(&self) -> semfuse::Result<NoiseModel> {
        match self {
            NoiseSpec::Preset(name) => NoiseModel::preset(name),
            NoiseSpec::Model(m) => Ok(*m),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub camera: Camera,
    pub trajectory: TrajectorySpec,
    pub volume: VolumeConfig,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default)]
    pub fusion: FusionConfig,
    pub primitives: Vec<Primitive>,
}

fn data_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

pub fn run(args: Args) -> CliResult<String> {
    // 16-bit millimetres top out at 65.535 m
    if !(args.max_range > 0.0 && args.max_range <= 65.0) {
        return Err(CliError::Usage("--max-range must be in (0, 65] meters".into()));
    }
    let mut file: SceneFile = io::load_toml(&args.scene)?;
    if let Some(n) = args.frames {
        if n == 0 {
            return Err(CliError::Usage("--frames must be at least 1".into()));
        }
        file.trajectory = file.trajectory.with_frames(n);
    }
    let mut noise = match &args.noise {
        Some(name) => NoiseModel::preset(name).map_err(|e| CliError::Usage(e.to_string()))?,
        None => file.noise.resolve()?,
    };
    if let Some(seed) = args.seed {
        noise = noise.with_seed(seed);
    }
    file.noise = NoiseSpec::Model(noise);

    let scene = AnalyticScene::new(file.primitives.clone())?;
    if file.volume.class_count == 0 {
        file.volume.class_count = scene.class_count();
    }
    let intrinsics = Intrinsics::from_fov(file.camera.width, file.camera.height, file.camera.hfov_deg)?;
    let poses = synth::trajectory(&file.trajectory)?;
    let config = RunConfig {
        fusion: file.fusion.clone(),
        dataset: DatasetConventions { class_names: file.class_names.clone(), ..Default::default() },
        noise,
        ..RunConfig::new(file.volume.clone())
    };
    config.validate()?;

    std::fs::create_dir_all(&args.out).map_err(data_err(&args.out))?;
    let mut writer = DatasetWriter::create(&args.out, &config, &intrinsics)?;
    for (i, pose) in poses.iter().enumerate() {
        let (depth, labels) = synth::render(&scene, &intrinsics, pose)?;
        let mut depth = synth::apply_noise(&depth, &noise, i as u64)?;
        for d in &mut depth.data {
            if f64::from(*d) > args.max_range {
                *d = 0.0;
            }
        }
        writer.write_frame(&depth, Some(&labels)).map_err(CliError::at_frame(i))?;
    }
    let frames = writer.finish(&poses, config.dataset.pose_convention)?;

    let gt = marching_cubes(&synth::bake_gt_volume(&scene, &config.volume)?, 0.0);
    io::write_mesh_ply(&gt, &args.out.join(GT_MESH_FILE))?;
    io::save_toml(&args.out.join(SCENE_FILE), &file)?;

    Ok(format!(
        "wrote {frames} frames ({}x{}) and a {}-triangle ground-truth mesh to {}",
        intrinsics.width,
        intrinsics.height,
        gt.triangles.len(),
        args.out.display()
    ))
}
