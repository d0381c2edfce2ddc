use std::path::{Path, PathBuf};

use semfuse::fusion::{filter_outliers, DEFAULT_OUTLIER_THRESHOLD};
use semfuse::io::{self, DatasetConventions, RunConfig};
use semfuse::meshing::{marching_cubes, TriMesh};
use semfuse::metrics::{self, IouReport, ReconReport, SamplingParams, DEFAULT_FSCORE_THRESHOLD};
use semfuse::volume::VoxelVolume;

use crate::error::{CliError, CliResult};
use crate::report;

/// Transfer radius for mesh predictions, two voxels at the default 1 cm size.
const MESH_LABEL_RADIUS: f64 = 0.02;

#[derive(clap::Args)]
pub struct Args {
    /// Predicted mesh (.ply) or volume checkpoint (any other extension)
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth mesh with per-vertex labels (.ply)
    #[arg(long)]
    gt: PathBuf,
    /// Run configuration supplying class names and metric defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// F-score distance threshold in meters [default: 0.01 or from config]
    #[arg(long, value_name = "M")]
    threshold: Option<f64>,
    /// Also report per-class IoU on the ground-truth vertices
    #[arg(long)]
    iou: bool,
    /// Outlier filter applied to a checkpoint before meshing [default: 2 or from config]
    #[arg(long, value_name = "W")]
    filter: Option<f32>,
    /// Label transfer radius in meters [default: two voxels]
    #[arg(long, value_name = "M")]
    label_radius: Option<f64>,
    /// Surface samples per square meter [default: 1e5 or from config]
    #[arg(long)]
    density: Option<f64>,
    /// Surface sampling seed [default: 0 or from config]
    #[arg(long)]
    seed: Option<u64>,
    /// Write recon.csv (and iou.csv with --iou) into this directory
    #[arg(long, value_name = "DIR")]
    csv_dir: Option<PathBuf>,
}

/// What is being evaluated: a mesh with vertex labels or a fused volume.
pub enum Prediction {
    Mesh(TriMesh),
    Volume(VoxelVolume),
}

pub fn load_prediction(path: &Path) -> CliResult<Prediction> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply")) {
        Ok(Prediction::Mesh(io::read_mesh_ply(path)?))
    } else {
        Ok(Prediction::Volume(io::read_checkpoint(path)?))
    }
}

pub struct Evaluation {
    pub recon: ReconReport,
    pub iou: Option<IouReport>,
}

pub struct EvalOptions {
    pub threshold: f64,
    pub filter: f32,
    pub label_radius: Option<f64>,
    pub params: SamplingParams,
    pub iou: bool,
}

pub fn evaluate(pred: &Prediction, gt: &TriMesh, class_count: u16, opts: &EvalOptions) -> CliResult<Evaluation> {
    let mesh = match pred {
        Prediction::Mesh(m) => m.clone(),
        Prediction::Volume(v) => marching_cubes(&filter_outliers(v, opts.filter), 0.0),
    };
    let recon = metrics::fscore(&mesh, gt, opts.threshold, &opts.params)?;
    let iou = if opts.iou {
        let queries = metrics::mesh_points(gt);
        let labels = match pred {
            Prediction::Mesh(m) => {
                let radius = opts.label_radius.unwrap_or(MESH_LABEL_RADIUS);
                let (src, lab): (Vec<_>, Vec<_>) = (0..m.vertices.len())
                    .filter(|&i| m.vertex_labels[i] != 0 && m.vertex_scores[i] > 0.0)
                    .map(|i| (m.vertex(i as u32), m.vertex_labels[i]))
                    .unzip();
                metrics::transfer_labels(&src, &lab, &queries, radius)?
            }
            Prediction::Volume(v) => {
                let radius = opts.label_radius.unwrap_or(2.0 * v.voxel_size());
                metrics::transfer_volume_labels(v, &queries, radius)?
            }
        };
        let classes = gt.vertex_labels.iter().copied().max().unwrap_or(0);
        Some(metrics::iou_per_class(&labels, &gt.vertex_labels, class_count.max(u16::from(classes)))?)
    } else {
        None
    };
    Ok(Evaluation { recon, iou })
}

pub fn run(args: Args) -> CliResult<String> {
    let config = args.config.as_deref().map(RunConfig::load).transpose()?;
    let names = config.as_ref().map_or_else(DatasetConventions::default, |c| c.dataset.clone());
    let m = config.as_ref().map(|c| c.metrics.clone()).unwrap_or_default();
    let opts = EvalOptions {
        threshold: args.threshold.unwrap_or(if config.is_some() { m.fscore_threshold } else { DEFAULT_FSCORE_THRESHOLD }),
        filter: args
            .filter
            .or(config.as_ref().map(|c| c.fusion.outlier_weight_threshold))
            .unwrap_or(DEFAULT_OUTLIER_THRESHOLD),
        label_radius: args.label_radius.or(config.as_ref().map(RunConfig::label_radius)),
        params: SamplingParams { density: args.density.unwrap_or(m.sample_density), seed: args.seed.unwrap_or(m.sample_seed) },
        iou: args.iou,
    };
    if !(opts.threshold > 0.0) || !(opts.params.density > 0.0) || !(opts.filter >= 0.0) {
        return Err(CliError::Usage("threshold and density must be positive, filter nonnegative".into()));
    }
    if opts.label_radius.is_some_and(|r| !(r > 0.0)) {
        return Err(CliError::Usage("label radius must be positive".into()));
    }

    let pred = load_prediction(&args.pred)?;
    let gt = io::read_mesh_ply(&args.gt)?;
    let class_count = config.as_ref().map_or(0, |c| c.volume.class_count);
    let ev = evaluate(&pred, &gt, class_count, &opts)?;

    let mut out = report::recon_line(&ev.recon);
    if let Some(iou) = &ev.iou {
        out += "\n";
        out += &report::iou_table(iou, &names);
    }
    if let Some(dir) = &args.csv_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        report::write_recon(&dir.join("recon.csv"), &ev.recon)?;
        if let Some(iou) = &ev.iou {
            report::write_iou(&dir.join("iou.csv"), iou, &names)?;
        }
    }
    Ok(out)
}
