use std::path::PathBuf;
use std::sync::mpsc;
use std::time::Duration;

use semfuse::fusion::{filter_outliers, ClassicPredictor, FusionConfig, Fuser, StageTimings};
use semfuse::io::{self, Dataset};
use semfuse::meshing::marching_cubes;
use semfuse::volume::VoxelVolume;

use crate::error::{CliError, CliResult};

/// Frames loaded ahead of the fusion loop.
const PREFETCH: usize = 4;
/// Leading frames left out of throughput figures.
const WARMUP_FRAMES: usize = 3;

#[derive(clap::Args)]
pub struct Args {
    /// Dataset root (config.toml, intrinsics.toml, trajectory.txt, depth/, label/, score/)
    #[arg(long)]
    dataset: PathBuf,
    /// Output mesh, binary PLY
    #[arg(long, short)]
    output: PathBuf,
    /// Run configuration [default: <dataset>/config.toml]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fuse geometry only; mesh labels are all 0
    #[arg(long)]
    no_semantics: bool,
    /// Outlier filter weight threshold applied before meshing [default: from config]
    #[arg(long, value_name = "W")]
    filter: Option<f32>,
    /// Also write the unfiltered volume to this checkpoint
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Print per-stage timings and steady-state frames per second
    #[arg(long)]
    fps_report: bool,
}

pub struct FusionRun {
    pub volume: VoxelVolume,
    pub frames: usize,
    /// Frames whose predictor output was rejected.
    pub skipped: Vec<usize>,
    pub rays_valid: usize,
    /// Stage totals over steady-state frames.
    pub stages: StageTimings,
    pub steady_elapsed: Duration,
    pub steady_frames: usize,
}

impl FusionRun {
    pub fn fps(&self) -> Option<f64> {
        (self.steady_frames > 0).then(|| self.steady_frames as f64 / self.steady_elapsed.as_secs_f64())
    }

    pub fn fps_report(&self) -> String {
        let n = self.steady_frames.max(1) as f64;
        let ms = |d: Duration| 1e3 * d.as_secs_f64() / n;
        let s = &self.stages;
        let fps = self.fps().map_or("n/a".to_string(), |f| format!("{f:.1}"));
        format!(
            "per frame over {} steady-state frames: extract {:.2} ms, predict {:.2} ms, integrate {:.2} ms, \
             semantic {:.2} ms; {fps} FPS",
            self.steady_frames,
            ms(s.extract),
            ms(s.predict),
            ms(s.integrate),
            ms(s.semantic)
        )
    }
}

/// Streams every dataset frame through the pipeline in order while a
/// loader thread reads ahead.
pub fn fuse_dataset(ds: &Dataset, fusion: &FusionConfig) -> CliResult<FusionRun> {
    let mut run = FusionRun {
        volume: VoxelVolume::new(ds.config.volume.clone())?,
        frames: 0,
        skipped: Vec::new(),
        rays_valid: 0,
        stages: StageTimings::default(),
        steady_elapsed: Duration::ZERO,
        steady_frames: 0,
    };
    let mut fuser = Fuser::new(fusion.clone())?;
    let predictor = ClassicPredictor::new(run.volume.truncation());
    let (tx, rx) = mpsc::sync_channel(PREFETCH);
    std::thread::scope(|s| {
        s.spawn(move || {
            for rec in &ds.frames {
                let loaded = ds.load_frame(rec);
                let failed = loaded.is_err();
                if tx.send((rec, loaded)).is_err() || failed {
                    break;
                }
            }
        });
        for (i, (rec, loaded)) in rx.into_iter().enumerate() {
            let (depth, labels) = loaded.map_err(CliError::at_frame(rec.index))?;
            let result =
                fuser.fuse_frame(&mut run.volume, &depth, labels.as_ref(), &ds.intrinsics, &rec.pose, &predictor);
            match result {
                Ok(report) => {
                    run.rays_valid += report.rays_valid;
                    if i >= WARMUP_FRAMES {
                        run.stages += report.stages;
                        run.steady_elapsed += report.elapsed;
                        run.steady_frames += 1;
                    }
                }
                Err(semfuse::Error::PredictorFault(_)) => run.skipped.push(rec.index),
                Err(e) => return Err(CliError::at_frame(rec.index)(e)),
            }
            run.frames += 1;
        }
        Ok(())
    })?;
    Ok(run)
}

pub fn run(args: Args) -> CliResult<String> {
    let mut config = super::load_config(args.config.as_deref(), &args.dataset)?;
    if args.no_semantics {
        config.fusion.semantics = false;
    }
    if let Some(w) = args.filter {
        config.fusion.outlier_weight_threshold = w;
    }
    config.fusion.validate()?;
    let ds = Dataset::open(&args.dataset, Some(config.clone()))?;
    let run = fuse_dataset(&ds, &config.fusion)?;

    let mesh = marching_cubes(&filter_outliers(&run.volume, config.fusion.outlier_weight_threshold), 0.0);
    io::write_mesh_ply(&mesh, &args.output)?;
    if let Some(p) = &args.checkpoint {
        io::write_checkpoint(&run.volume, p)?;
    }

    let mut out = format!(
        "fused {} frames ({} skipped), {} valid rays; mesh {} vertices, {} triangles -> {}",
        run.frames,
        run.skipped.len(),
        run.rays_valid,
        mesh.vertices.len(),
        mesh.triangles.len(),
        args.output.display()
    );
    if !run.skipped.is_empty() {
        let list: Vec<String> = run.skipped.iter().map(usize::to_string).collect();
        out += &format!("\npredictor faults at frames {}", list.join(", "));
    }
    if args.fps_report {
        out += "\n";
        out += &run.fps_report();
    }
    Ok(out)
}
