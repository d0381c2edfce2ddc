//! CSV reports. Floats use the shortest representation that round-trips.

use std::path::Path;

use semfuse::io::DatasetConventions;
use semfuse::metrics::{IouReport, ReconReport, SweepRow};

use crate::error::{CliError, CliResult};

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let fail = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_recon(path: &Path, r: &ReconReport) -> CliResult<()> {
    write_rows(
        path,
        &["threshold", "precision", "recall", "f1", "n_pred_points", "n_gt_points"],
        [vec![
            r.distance_threshold.to_string(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.f1.to_string(),
            r.n_pred_points.to_string(),
            r.n_gt_points.to_string(),
        ]],
    )
}

pub fn write_iou(path: &Path, r: &IouReport, names: &DatasetConventions) -> CliResult<()> {
    write_rows(
        path,
        &["class_id", "class_name", "iou", "support"],
        r.per_class
            .iter()
            .map(|c| vec![c.class_id.to_string(), names.class_name(c.class_id), c.iou.to_string(), c.support.to_string()]),
    )
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> CliResult<()> {
    write_rows(
        path,
        &["threshold", "precision", "recall", "f1"],
        rows.iter().map(|r| {
            vec![r.threshold.to_string(), r.report.precision.to_string(), r.report.recall.to_string(), r.report.f1.to_string()]
        }),
    )
}

pub fn recon_line(r: &ReconReport) -> String {
    format!(
        "precision {:.2}  recall {:.2}  F1 = {:.2}  (threshold {} m, {} pred / {} gt points)",
        r.precision, r.recall, r.f1, r.distance_threshold, r.n_pred_points, r.n_gt_points
    )
}

pub fn iou_table(r: &IouReport, names: &DatasetConventions) -> String {
    let mut out = format!("{:>8}  {:<16} {:>8} {:>10}\n", "class_id", "class_name", "iou", "support");
    for c in &r.per_class {
        out += &format!("{:>8}  {:<16} {:>8.4} {:>10}\n", c.class_id, names.class_name(c.class_id), c.iou, c.support);
    }
    out += &format!("mean IoU {:.4}", r.mean_iou);
    out
}
