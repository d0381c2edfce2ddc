use std::path::PathBuf;

use semfuse::io::{self, Dataset};
use semfuse::metrics::{self, SamplingParams, DEFAULT_FSCORE_THRESHOLD, DEFAULT_SAMPLE_DENSITY, DEFAULT_SAMPLE_SEED};

use crate::error::{CliError, CliResult};
use crate::report;

#[derive(clap::Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["dataset", "checkpoint"])))]
pub struct Args {
    /// Fuse this dataset once, then sweep
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Run configuration for --dataset
    #[arg(long, requires = "dataset")]
    config: Option<PathBuf>,
    /// Sweep an already fused volume
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Ground-truth mesh (.ply)
    #[arg(long)]
    gt: PathBuf,
    /// Comma-separated weight thresholds
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,8")]
    thresholds: Vec<f32>,
    /// F-score distance threshold in meters
    #[arg(long, default_value_t = DEFAULT_FSCORE_THRESHOLD)]
    distance: f64,
    /// Surface samples per square meter
    #[arg(long, default_value_t = DEFAULT_SAMPLE_DENSITY)]
    density: f64,
    /// Surface sampling seed
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SEED)]
    seed: u64,
    /// Write the table as CSV
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: Args) -> CliResult<String> {
    if args.thresholds.is_empty() {
        return Err(CliError::Usage("--thresholds needs at least one value".into()));
    }
    if args.thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(CliError::Usage("thresholds must be finite and nonnegative".into()));
    }
    if !(args.distance > 0.0) || !(args.density > 0.0) {
        return Err(CliError::Usage("distance and density must be positive".into()));
    }
    let volume = match (&args.dataset, &args.checkpoint) {
        (Some(root), _) => {
            let config = super::load_config(args.config.as_deref(), root)?;
            let ds = Dataset::open(root, Some(config.clone()))?;
            super::fuse::fuse_dataset(&ds, &config.fusion)?.volume
        }
        (None, Some(p)) => io::read_checkpoint(p)?,
        (None, None) => unreachable!("clap requires a source"),
    };
    let gt = io::read_mesh_ply(&args.gt)?;
    let params = SamplingParams { density: args.density, seed: args.seed };
    let rows = metrics::outlier_sweep(&volume, &gt, &args.thresholds, args.distance, &params)?;
    if let Some(out) = &args.out {
        report::write_sweep(out, &rows)?;
    }
    let mut table = format!("{:>9} {:>9} {:>9} {:>9}", "threshold", "precision", "recall", "f1");
    for r in &rows {
        table += &format!("\n{:>9} {:>9.2} {:>9.2} {:>9.2}", r.threshold, r.report.precision, r.report.recall, r.report.f1);
    }
    Ok(table)
}
