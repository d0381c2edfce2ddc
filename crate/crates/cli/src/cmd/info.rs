use std::path::{Path, PathBuf};

use semfuse::io::{self, Dataset};
use semfuse::volume::{snapshot_stats, VoxelVolume, DEFAULT_WEIGHT_BINS};

use crate::error::CliResult;

#[derive(clap::Args)]
pub struct Args {
    /// Dataset directory, mesh (.ply) or volume checkpoint
    path: PathBuf,
}

fn volume_summary(v: &VoxelVolume) -> String {
    let c = v.config();
    let s = snapshot_stats(v, &DEFAULT_WEIGHT_BINS);
    let mut out = format!(
        "volume {}x{}x{} at {} m, truncation {} m, {:?} storage, {} classes\n\
         occupied voxels {}, labeled voxels {}\nweight histogram:",
        c.dims[0], c.dims[1], c.dims[2], c.voxel_size, c.truncation, c.precision, c.class_count,
        s.occupied_voxels, s.labeled_voxels
    );
    for (edge, count) in s.weight_histogram {
        out += &format!("\n  >= {edge:<4} {count}");
    }
    out
}

fn dataset_summary(root: &Path) -> CliResult<String> {
    let ds = Dataset::open(root, None)?;
    let k = &ds.intrinsics;
    let labeled = ds.frames.iter().filter(|f| f.label_path.is_some()).count();
    let v = &ds.config.volume;
    Ok(format!(
        "dataset {}: {} frames ({labeled} with labels), {}x{} camera, volume {}x{}x{} at {} m, {} classes",
        root.display(),
        ds.frames.len(),
        k.width,
        k.height,
        v.dims[0],
        v.dims[1],
        v.dims[2],
        v.voxel_size,
        v.class_count
    ))
}

pub fn run(args: Args) -> CliResult<String> {
    let p = &args.path;
    if p.is_dir() {
        return dataset_summary(p);
    }
    if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply")) {
        let m = io::read_mesh_ply(p)?;
        let labeled = m.vertex_labels.iter().filter(|&&l| l != 0).count();
        let (boundary, manifold, over) = m.edge_sharing();
        return Ok(format!(
            "mesh {}: {} vertices ({labeled} labeled), {} triangles, area {:.4} m^2, \
             edges: {boundary} boundary, {manifold} manifold, {over} non-manifold",
            p.display(),
            m.vertices.len(),
            m.triangles.len(),
            m.surface_area()
        ));
    }
    Ok(volume_summary(&io::read_checkpoint(p)?))
}
