//! Reconstruction and segmentation metrics, plus the training losses as
//! plain numeric utilities.

use std::collections::HashMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::filter_outliers;
use crate::meshing::{marching_cubes, TriMesh};
use crate::volume::VoxelVolume;

pub const DEFAULT_FSCORE_THRESHOLD: f64 = 0.01;
/// Surface samples per square meter (10 per cm²).
pub const DEFAULT_SAMPLE_DENSITY: f64 = 1e5;
pub const DEFAULT_SAMPLE_SEED: u64 = 0;

/// Precision, recall and F1 in percent at a distance threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub distance_threshold: f64,
    pub n_pred_points: usize,
    pub n_gt_points: usize,
}

impl ReconReport {
    fn from_counts(pred_hit: usize, n_pred: usize, gt_hit: usize, n_gt: usize, threshold: f64) -> Self {
        let pct = |hit: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * hit as f64 / n as f64 };
        let precision = pct(pred_hit, n_pred);
        let recall = pct(gt_hit, n_gt);
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
            distance_threshold: threshold,
            n_pred_points: n_pred,
            n_gt_points: n_gt,
        }
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Surface sampling parameters for [`fscore`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingParams {
    pub density: f64,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { density: DEFAULT_SAMPLE_DENSITY, seed: DEFAULT_SAMPLE_SEED }
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn triangle_seed(seed: u64, tri: &[[f32; 3]; 3]) -> u64 {
    tri.iter().flatten().fold(mix64(seed), |h, c| mix64(h ^ u64::from(c.to_bits())))
}

/// Area-weighted uniform samples on the mesh surface.
///
/// Each triangle draws `floor(area * density + u)` points from its own RNG,
/// seeded by `seed` and the triangle's vertex coordinates. A triangle
/// therefore yields the same samples in any mesh that contains it.
pub fn sample_surface(mesh: &TriMesh, params: &SamplingParams) -> Vec<Vector3<f64>> {
    let per_tri: Vec<Vec<Vector3<f64>>> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let raw = mesh.triangles[t].map(|i| mesh.vertices[i as usize]);
            let [a, b, c] = mesh.triangle_points(t);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            let mut rng = ChaCha8Rng::seed_from_u64(triangle_seed(params.seed, &raw));
            let n = (area * params.density + rng.random::<f64>()).floor() as usize;
            (0..n)
                .map(|_| {
                    let r1: f64 = rng.random::<f64>().sqrt();
                    let r2: f64 = rng.random();
                    a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
                })
                .collect()
        })
        .collect();
    per_tri.into_iter().flatten().collect()
}

/// Uniform hash grid over points for fixed-radius queries.
struct PointGrid<'a> {
    cell: f64,
    points: &'a [Vector3<f64>],
    cells: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a> PointGrid<'a> {
    fn new(points: &'a [Vector3<f64>], cell: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        Self { cell, points, cells }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> [i64; 3] {
        [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64]
    }

    /// Calls `f(index, squared distance)` for every point within `radius`
    /// (`radius` must not exceed the cell size).
    fn for_each_within(&self, q: &Vector3<f64>, radius: f64, mut f: impl FnMut(u32, f64)) {
        let k = Self::key(q, self.cell);
        let r2 = radius * radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(list) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                        continue;
                    };
                    for &i in list {
                        let d2 = (self.points[i as usize] - q).norm_squared();
                        if d2 <= r2 {
                            f(i, d2);
                        }
                    }
                }
            }
        }
    }

    fn any_within(&self, q: &Vector3<f64>, radius: f64) -> bool {
        let mut hit = false;
        self.for_each_within(q, radius, |_, _| hit = true);
        hit
    }
}

/// Number of `queries` with at least one of `targets` within `threshold`.
pub fn count_within(queries: &[Vector3<f64>], targets: &[Vector3<f64>], threshold: f64) -> usize {
    if targets.is_empty() {
        return 0;
    }
    let grid = PointGrid::new(targets, threshold);
    queries.par_iter().filter(|q| grid.any_within(q, threshold)).count()
}

/// F-score between two meshes by point-to-point distance on dense surface
/// samples. A point counts as correct when its nearest counterpart is at
/// most `threshold` away.
pub fn fscore(pred: &TriMesh, gt: &TriMesh, threshold: f64, params: &SamplingParams) -> Result<ReconReport> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::Metric(format!("distance threshold must be positive, got {threshold}")));
    }
    if !(params.density > 0.0) || !params.density.is_finite() {
        return Err(Error::Metric(format!("sample density must be positive, got {}", params.density)));
    }
    let p = sample_surface(pred, params);
    let g = sample_surface(gt, params);
    fscore_points(&p, &g, threshold)
}

/// [`fscore`] on already sampled point sets.
pub fn fscore_points(pred: &[Vector3<f64>], gt: &[Vector3<f64>], threshold: f64) -> Result<ReconReport> {
    if pred.is_empty() && gt.is_empty() {
        return Err(Error::Metric("both surfaces are empty".into()));
    }
    let pred_hit = count_within(pred, gt, threshold);
    let gt_hit = count_within(gt, pred, threshold);
    Ok(ReconReport::from_counts(pred_hit, pred.len(), gt_hit, gt.len(), threshold))
}

/// One row of an outlier-filter sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub threshold: f32,
    pub report: ReconReport,
}

/// Filters `volume` at each weight threshold, meshes it and scores it
/// against `gt`. Rows come back sorted by threshold.
pub fn outlier_sweep(
    volume: &VoxelVolume,
    gt: &TriMesh,
    thresholds: &[f32],
    distance: f64,
    params: &SamplingParams,
) -> Result<Vec<SweepRow>> {
    if thresholds.is_empty() {
        return Err(Error::Metric("no sweep thresholds given".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::Metric(format!("sweep threshold {t} must be finite and >= 0")));
    }
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(f32::total_cmp);
    let gt_points = sample_surface(gt, params);
    sorted
        .into_iter()
        .map(|threshold| {
            let mesh = marching_cubes(&filter_outliers(volume, threshold), 0.0);
            let pred = sample_surface(&mesh, params);
            Ok(SweepRow { threshold, report: fscore_points(&pred, &gt_points, distance)? })
        })
        .collect()
}

/// Rows are ground truth, columns prediction. Index 0 is "unlabeled".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    size: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    /// Matrix over ids `0..=class_count`.
    pub fn new(class_count: u16) -> Self {
        let size = usize::from(class_count) + 1;
        Self { size, counts: vec![0; size * size] }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, gt: u8, pred: u8) -> u64 {
        self.counts[usize::from(gt) * self.size + usize::from(pred)]
    }

    pub fn add(&mut self, gt: u8, pred: u8) -> Result<()> {
        let (g, p) = (usize::from(gt), usize::from(pred));
        if g >= self.size || p >= self.size {
            return Err(Error::Metric(format!("label pair ({gt}, {pred}) outside {} classes", self.size - 1)));
        }
        self.counts[g * self.size + p] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Ground-truth vertices of class `c`.
    pub fn support(&self, c: u8) -> u64 {
        let r = usize::from(c) * self.size;
        self.counts[r..r + self.size].iter().sum()
    }

    /// `TP / (TP + FP + FN)`, `None` when the denominator is 0.
    pub fn iou(&self, c: u8) -> Option<f64> {
        let ci = usize::from(c);
        let tp = self.get(c, c);
        let fn_ = self.support(c) - tp;
        let fp: u64 = (0..self.size).filter(|&g| g != ci).map(|g| self.counts[g * self.size + ci]).sum();
        let denom = tp + fp + fn_;
        (denom > 0).then(|| tp as f64 / denom as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassIou {
    pub class_id: u8,
    pub iou: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IouReport {
    pub confusion: ConfusionMatrix,
    /// Classes present in the ground truth, ascending id.
    pub per_class: Vec<ClassIou>,
    pub mean_iou: f64,
}

/// Per-class IoU over ground-truth vertices.
///
/// Vertices with ground-truth label 0 are not evaluated. A prediction of 0
/// counts as a miss for the vertex's class.
pub fn iou_per_class(pred: &[u8], gt: &[u8], class_count: u16) -> Result<IouReport> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("{} predictions for {} vertices", pred.len(), gt.len())));
    }
    let mut confusion = ConfusionMatrix::new(class_count);
    for (&g, &p) in gt.iter().zip(pred) {
        if g != 0 {
            confusion.add(g, p)?;
        }
    }
    if confusion.total() == 0 {
        return Err(Error::Metric("ground truth has no labeled vertices".into()));
    }
    let per_class: Vec<ClassIou> = (1..=class_count as u8)
        .filter(|&c| confusion.support(c) > 0)
        .map(|c| ClassIou { class_id: c, iou: confusion.iou(c).unwrap_or(0.0), support: confusion.support(c) })
        .collect();
    let mean_iou = per_class.iter().map(|c| c.iou).sum::<f64>() / per_class.len() as f64;
    Ok(IouReport { confusion, per_class, mean_iou })
}

/// Gives each query the label of its nearest source point within `radius`
/// (ties to the lowest source index), or 0 when none is in range.
pub fn transfer_labels(
    sources: &[Vector3<f64>],
    labels: &[u8],
    queries: &[Vector3<f64>],
    radius: f64,
) -> Result<Vec<u8>> {
    if sources.len() != labels.len() {
        return Err(Error::Shape(format!("{} source points but {} labels", sources.len(), labels.len())));
    }
    if !(radius > 0.0) {
        return Err(Error::Metric(format!("transfer radius must be positive, got {radius}")));
    }
    let grid = PointGrid::new(sources, radius);
    Ok(queries
        .par_iter()
        .map(|q| {
            let mut best: Option<(f64, u32)> = None;
            grid.for_each_within(q, radius, |i, d2| {
                if best.is_none_or(|(bd, bi)| d2 < bd || (d2 == bd && i < bi)) {
                    best = Some((d2, i));
                }
            });
            best.map_or(0, |(_, i)| labels[i as usize])
        })
        .collect())
}

/// Maps the volume's labeled voxels (score > 0) onto `queries`.
pub fn transfer_volume_labels(volume: &VoxelVolume, queries: &[Vector3<f64>], radius: f64) -> Result<Vec<u8>> {
    let (centers, labels): (Vec<_>, Vec<_>) = (0..volume.len())
        .filter(|&i| volume.label(i) != 0 && volume.score(i) > 0.0)
        .map(|i| (volume.voxel_center(i), volume.label(i)))
        .unzip();
    transfer_labels(&centers, &labels, queries, radius)
}

pub fn mesh_points(mesh: &TriMesh) -> Vec<Vector3<f64>> {
    (0..mesh.vertices.len() as u32).map(|i| mesh.vertex(i)).collect()
}

/// Loss weights `(λ1, λ2, λ3)` for L1, L2 and cosine terms.
pub const DEFAULT_FUSION_LAMBDAS: (f64, f64, f64) = (1.0, 10.0, 0.1);

/// Sum over valid rays of `λ1·mean|d| + λ2·mean d² + λ3·(1 − cos)` where
/// `d = pred − gt` along the ray's `window` samples. The cosine term of a
/// ray with a zero-norm vector is 0.
pub fn fusion_loss(
    pred: &[f32],
    gt: &[f32],
    window: usize,
    valid: &[bool],
    lambdas: (f64, f64, f64),
) -> Result<f64> {
    if window == 0 || pred.len() != gt.len() || pred.len() != valid.len() * window {
        return Err(Error::Shape(format!(
            "fusion loss inputs: {} pred, {} gt, {} rays of {window}",
            pred.len(),
            gt.len(),
            valid.len()
        )));
    }
    let (l1w, l2w, lcw) = lambdas;
    let mut total = 0.0;
    for (ray, _) in valid.iter().enumerate().filter(|(_, &v)| v) {
        let p = &pred[ray * window..(ray + 1) * window];
        let g = &gt[ray * window..(ray + 1) * window];
        let (mut l1, mut l2, mut dot, mut np, mut ng) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&a, &b) in p.iter().zip(g) {
            let (a, b) = (f64::from(a), f64::from(b));
            let d = a - b;
            l1 += d.abs();
            l2 += d * d;
            dot += a * b;
            np += a * a;
            ng += b * b;
        }
        let n = window as f64;
        let lc = if np > 0.0 && ng > 0.0 { (1.0 - dot / (np * ng).sqrt()).max(0.0) } else { 0.0 };
        total += l1w * l1 / n + l2w * l2 / n + lcw * lc;
    }
    Ok(total)
}

pub const DEFAULT_BOOTSTRAP_K: usize = 4096;
pub const DEFAULT_BOOTSTRAP_THRESHOLD: f64 = 0.5;

/// Bootstrapped cross-entropy: the sum of all per-pixel losses above
/// `threshold` when at least `k` of them exceed it, else the sum of the `k`
/// largest. Equivalently the sum of the `max(n, k)` largest losses, where
/// `n` counts losses above the threshold. With at most `k` pixels all are
/// summed.
pub fn bootstrapped_ce(losses: &[f64], k: usize, threshold: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Metric("K must be at least 1".into()));
    }
    if let Some(bad) = losses.iter().find(|l| !l.is_finite()) {
        return Err(Error::Metric(format!("non-finite loss {bad}")));
    }
    if losses.len() <= k {
        return Ok(losses.iter().sum());
    }
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let above = sorted.iter().take_while(|&&l| l > threshold).count();
    Ok(sorted[..above.max(k)].iter().sum())
}

pub const AUX_LOSS_WEIGHTS: (f64, f64) = (0.6, 0.5);

/// Main loss plus weighted auxiliary losses.
pub fn multiscale_seg_loss(main: f64, aux1: f64, aux2: f64) -> f64 {
    main + AUX_LOSS_WEIGHTS.0 * aux1 + AUX_LOSS_WEIGHTS.1 * aux2
}
