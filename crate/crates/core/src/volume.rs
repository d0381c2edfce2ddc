//! Dense global grids: TSDF, fusion weight, class label, and label score.
//!
//! All four grids share one lattice and are stored z-fastest in contiguous
//! buffers. TSDF, weight and score are kept at the configured storage
//! precision (half or single) and widened to `f32` on every read.

use std::sync::OnceLock;

use half::f16;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoragePrecision {
    #[default]
    Half,
    Single,
}

impl StoragePrecision {
    pub fn scalar_bytes(self) -> u64 {
        match self {
            StoragePrecision::Half => 2,
            StoragePrecision::Single => 4,
        }
    }

    /// Bytes per voxel across tsdf, weight, label (u8) and score.
    pub fn voxel_bytes(self) -> u64 {
        3 * self.scalar_bytes() + 1
    }
}

fn default_budget() -> u64 {
    DEFAULT_MEMORY_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeConfig {
    pub dims: [usize; 3],
    pub voxel_size: f64,
    /// World position of the center of voxel (0, 0, 0).
    pub origin: [f64; 3],
    pub truncation: f64,
    #[serde(default)]
    pub precision: StoragePrecision,
    /// Number of semantic classes (ids 1..=class_count; 0 is unlabeled).
    #[serde(default)]
    pub class_count: u16,
    /// Optional cap on accumulated weight. Unlimited by default.
    #[serde(default)]
    pub max_weight: Option<f32>,
    #[serde(default = "default_budget")]
    pub memory_budget: u64,
}

impl VolumeConfig {
    pub fn new(dims: [usize; 3], voxel_size: f64, origin: [f64; 3], truncation: f64) -> Self {
        Self {
            dims,
            voxel_size,
            origin,
            truncation,
            precision: StoragePrecision::Half,
            class_count: 0,
            max_weight: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    /// Smallest lattice with the given voxel size covering `[min, max]`.
    pub fn covering(min: Vector3<f64>, max: Vector3<f64>, voxel_size: f64, truncation: f64) -> Self {
        let dims = [0, 1, 2].map(|a| (((max[a] - min[a]) / voxel_size).ceil() as usize + 1).max(1));
        Self::new(dims, voxel_size, [min.x, min.y, min.z], truncation)
    }

    pub fn with_precision(mut self, precision: StoragePrecision) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_class_count(mut self, class_count: u16) -> Self {
        self.class_count = class_count;
        self
    }

    pub fn voxel_count(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    pub fn required_bytes(&self) -> u64 {
        self.voxel_count() * self.precision.voxel_bytes()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("volume dims must be >= 1, got {:?}", self.dims)));
        }
        if self.dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::Config("volume dims exceed u32 range".into()));
        }
        if !(self.voxel_size > 0.0) || !self.voxel_size.is_finite() {
            return Err(Error::Config(format!("voxel size must be positive, got {}", self.voxel_size)));
        }
        if !(self.truncation >= self.voxel_size) || !self.truncation.is_finite() {
            return Err(Error::Config(format!(
                "truncation {} must be >= voxel size {}",
                self.truncation, self.voxel_size
            )));
        }
        if self.origin.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("volume origin must be finite".into()));
        }
        if self.class_count > 255 {
            return Err(Error::Config(format!("at most 255 classes, got {}", self.class_count)));
        }
        if let Some(m) = self.max_weight {
            if !(m > 0.0) {
                return Err(Error::Config(format!("max_weight must be positive, got {m}")));
            }
        }
        Ok(())
    }
}

/// A scalar grid at storage precision.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarGrid {
    Half(Vec<f16>),
    Single(Vec<f32>),
}

impl ScalarGrid {
    pub fn zeros(precision: StoragePrecision, len: usize) -> Self {
        match precision {
            StoragePrecision::Half => ScalarGrid::Half(vec![f16::ZERO; len]),
            StoragePrecision::Single => ScalarGrid::Single(vec![0.0; len]),
        }
    }

    pub fn from_f32(precision: StoragePrecision, values: &[f32]) -> Self {
        match precision {
            StoragePrecision::Half => ScalarGrid::Half(values.iter().map(|&v| f16::from_f32(v)).collect()),
            StoragePrecision::Single => ScalarGrid::Single(values.to_vec()),
        }
    }

    pub fn precision(&self) -> StoragePrecision {
        match self {
            ScalarGrid::Half(_) => StoragePrecision::Half,
            ScalarGrid::Single(_) => StoragePrecision::Single,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ScalarGrid::Half(v) => v.len(),
            ScalarGrid::Single(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> f32 {
        match self {
            ScalarGrid::Half(v) => half_to_f32(v[i]),
            ScalarGrid::Single(v) => v[i],
        }
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, value: f32) {
        match self {
            ScalarGrid::Half(v) => v[i] = f16::from_f32(value),
            ScalarGrid::Single(v) => v[i] = value,
        }
    }

    pub fn to_vec(&self) -> Vec<f32> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    /// Value after a store/load cycle at this grid's precision.
    pub fn quantize(precision: StoragePrecision, value: f32) -> f32 {
        match precision {
            StoragePrecision::Half => f16::from_f32(value).to_f32(),
            StoragePrecision::Single => value,
        }
    }
}

/// Table lookup for half to single conversion; exact, and much cheaper
/// than per-value conversion on the extraction hot path.
#[inline]
fn half_to_f32(h: f16) -> f32 {
    static TABLE: OnceLock<Box<[f32]>> = OnceLock::new();
    let table = TABLE.get_or_init(|| (0..=u16::MAX).map(|b| f16::from_bits(b).to_f32()).collect());
    table[usize::from(h.to_bits())]
}

#[derive(Debug, Clone)]
pub struct VoxelVolume {
    config: VolumeConfig,
    pub(crate) tsdf: ScalarGrid,
    pub(crate) weight: ScalarGrid,
    pub(crate) label: Vec<u8>,
    pub(crate) score: ScalarGrid,
}

impl VoxelVolume {
    /// Allocates a zero-initialized volume (weight 0 means unknown).
    pub fn new(config: VolumeConfig) -> Result<Self> {
        config.validate()?;
        let required = config.required_bytes();
        if required > config.memory_budget {
            return Err(Error::AllocationRefused { required, budget: config.memory_budget });
        }
        let n = config.voxel_count() as usize;
        Ok(Self {
            tsdf: ScalarGrid::zeros(config.precision, n),
            weight: ScalarGrid::zeros(config.precision, n),
            label: vec![0; n],
            score: ScalarGrid::zeros(config.precision, n),
            config,
        })
    }

    /// Builds a volume from explicit grid contents, validating every invariant.
    pub fn from_grids(
        config: VolumeConfig,
        tsdf: &[f32],
        weight: &[f32],
        label: &[u8],
        score: &[f32],
    ) -> Result<Self> {
        let mut vol = Self::new(config)?;
        let n = vol.len();
        for (name, len) in [("tsdf", tsdf.len()), ("weight", weight.len()), ("label", label.len()), ("score", score.len())] {
            if len != n {
                return Err(Error::Shape(format!("{name} grid has {len} values, volume has {n}")));
            }
        }
        let p = vol.config.precision;
        vol.tsdf = ScalarGrid::from_f32(p, tsdf);
        vol.weight = ScalarGrid::from_f32(p, weight);
        vol.label = label.to_vec();
        vol.score = ScalarGrid::from_f32(p, score);
        vol.check_invariants().map_err(Error::Config)?;
        Ok(vol)
    }

    pub(crate) fn from_raw(
        config: VolumeConfig,
        tsdf: ScalarGrid,
        weight: ScalarGrid,
        label: Vec<u8>,
        score: ScalarGrid,
    ) -> Self {
        Self { config, tsdf, weight, label, score }
    }

    pub fn config(&self) -> &VolumeConfig {
        &self.config
    }

    pub fn dims(&self) -> [usize; 3] {
        self.config.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.config.voxel_size
    }

    pub fn truncation(&self) -> f64 {
        self.config.truncation
    }

    pub fn len(&self) -> usize {
        self.label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        let [_, dy, dz] = self.config.dims;
        (x * dy + y) * dz + z
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [_, dy, dz] = self.config.dims;
        [index / (dy * dz), (index / dz) % dy, index % dz]
    }

    /// Continuous voxel coordinate of a world point; may lie outside the grid.
    #[inline]
    pub fn world_to_voxel(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let o = &self.config.origin;
        (p - Vector3::new(o[0], o[1], o[2])) / self.config.voxel_size
    }

    #[inline]
    pub fn voxel_to_world(&self, c: &Vector3<f64>) -> Vector3<f64> {
        let o = &self.config.origin;
        c * self.config.voxel_size + Vector3::new(o[0], o[1], o[2])
    }

    pub fn voxel_center(&self, index: usize) -> Vector3<f64> {
        let [x, y, z] = self.coords(index);
        self.voxel_to_world(&Vector3::new(x as f64, y as f64, z as f64))
    }

    #[inline]
    pub fn tsdf(&self, i: usize) -> f32 {
        self.tsdf.get(i)
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f32 {
        self.weight.get(i)
    }

    #[inline]
    pub fn label(&self, i: usize) -> u8 {
        self.label[i]
    }

    #[inline]
    pub fn score(&self, i: usize) -> f32 {
        self.score.get(i)
    }

    pub fn tsdf_grid(&self) -> &ScalarGrid {
        &self.tsdf
    }

    pub fn weight_grid(&self) -> &ScalarGrid {
        &self.weight
    }

    pub fn label_grid(&self) -> &[u8] {
        &self.label
    }

    pub fn score_grid(&self) -> &ScalarGrid {
        &self.score
    }

    pub fn max_weight(&self) -> f32 {
        (0..self.len()).map(|i| self.weight(i)).fold(0.0, f32::max)
    }

    /// Checks the clamp band, weight sign, score range and the
    /// label-implies-score rule.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let trunc = ScalarGrid::quantize(self.config.precision, self.config.truncation as f32);
        for i in 0..self.len() {
            let (t, w, s, l) = (self.tsdf(i), self.weight(i), self.score(i), self.label[i]);
            if !t.is_finite() || t.abs() > trunc {
                return Err(format!("voxel {i}: tsdf {t} outside +-{trunc}"));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(format!("voxel {i}: weight {w}"));
            }
            if !(0.0..=1.0).contains(&s) {
                return Err(format!("voxel {i}: score {s} outside [0, 1]"));
            }
            if s == 0.0 && l != 0 {
                return Err(format!("voxel {i}: label {l} with zero score"));
            }
        }
        Ok(())
    }
}

/// Summary of a volume's occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeStats {
    pub occupied_voxels: usize,
    pub labeled_voxels: usize,
    /// `(lower edge, count)`; bin `i` covers `[edge_i, edge_{i+1})`, the last
    /// bin is open-ended. Only occupied voxels are binned.
    pub weight_histogram: Vec<(f32, usize)>,
}

pub const DEFAULT_WEIGHT_BINS: [f32; 8] = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

/// `bin_edges` must be ascending and start at or below the smallest
/// positive weight; weights below the first edge land in the first bin.
pub fn snapshot_stats(volume: &VoxelVolume, bin_edges: &[f32]) -> VolumeStats {
    let edges = if bin_edges.is_empty() { &[0.0][..] } else { bin_edges };
    let mut counts = vec![0usize; edges.len()];
    let mut occupied = 0;
    let mut labeled = 0;
    for i in 0..volume.len() {
        let w = volume.weight(i);
        if w > 0.0 {
            occupied += 1;
            let bin = edges.partition_point(|&e| e <= w).saturating_sub(1);
            counts[bin] += 1;
        }
        if volume.score(i) > 0.0 {
            labeled += 1;
        }
    }
    VolumeStats {
        occupied_voxels: occupied,
        labeled_voxels: labeled,
        weight_histogram: edges.iter().copied().zip(counts).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_volume_is_zeroed() {
        let vol = VoxelVolume::new(VolumeConfig::new([8, 8, 8], 0.01, [0.0; 3], 0.04)).unwrap();
        assert_eq!(vol.len(), 512);
        assert!((0..vol.len()).all(|i| vol.weight(i) == 0.0 && vol.tsdf(i) == 0.0 && vol.label(i) == 0 && vol.score(i) == 0.0));
        let stats = snapshot_stats(&vol, &DEFAULT_WEIGHT_BINS);
        assert_eq!((stats.occupied_voxels, stats.labeled_voxels), (0, 0));
    }

    #[test]
    fn truncation_below_voxel_size_is_rejected() {
        let err = VoxelVolume::new(VolumeConfig::new([1, 1, 1], 0.01, [0.0; 3], 0.005)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(VoxelVolume::new(VolumeConfig::new([0, 1, 1], 0.01, [0.0; 3], 0.05)).is_err());
    }

    #[test]
    fn budget_reports_required_bytes() {
        let mut cfg = VolumeConfig::new([512, 512, 256], 0.01, [0.0; 3], 0.05);
        cfg.memory_budget = 1 << 20;
        match VoxelVolume::new(cfg).unwrap_err() {
            Error::AllocationRefused { required, budget } => {
                assert!(required >= 512 * 512 * 256 * (2 + 2 + 1 + 2));
                assert_eq!(budget, 1 << 20);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn world_voxel_mapping() {
        let vol = VoxelVolume::new(VolumeConfig::new([4, 5, 6], 0.02, [1.0, -2.0, 0.5], 0.04)).unwrap();
        let o = Vector3::new(1.0, -2.0, 0.5);
        assert_eq!(vol.world_to_voxel(&o), Vector3::zeros());
        let c = vol.world_to_voxel(&(o + Vector3::new(1.0, 2.0, 3.0) * 0.02));
        assert!((c - Vector3::new(1.0, 2.0, 3.0)).norm() < 1e-12);
        for p in [Vector3::new(0.3, 0.7, -1.1), Vector3::new(12.0, -4.0, 2.5)] {
            assert!((vol.voxel_to_world(&vol.world_to_voxel(&p)) - p).norm() < 1e-9);
        }
        for i in [0, 17, 119] {
            let [x, y, z] = vol.coords(i);
            assert_eq!(vol.index(x, y, z), i);
        }
        // z is the fastest axis
        assert_eq!(vol.index(0, 0, 1), 1);
        assert_eq!(vol.index(0, 1, 0), 6);
    }

    #[test]
    fn half_storage_rounding_is_bounded() {
        for v in [0.0123f32, -0.049, 1.5, 37.25, 1000.3] {
            let q = ScalarGrid::quantize(StoragePrecision::Half, v);
            assert!((q - v).abs() <= v.abs() * 2f32.powi(-11));
        }
    }

    #[test]
    fn histogram_partitions_occupied() {
        let n = 27;
        let weight: Vec<f32> = (0..n).map(|i| i as f32 * 0.7).collect();
        let vol = VoxelVolume::from_grids(
            VolumeConfig::new([3, 3, 3], 0.01, [0.0; 3], 0.02),
            &vec![0.0; n],
            &weight,
            &vec![0; n],
            &vec![0.0; n],
        )
        .unwrap();
        let stats = snapshot_stats(&vol, &DEFAULT_WEIGHT_BINS);
        assert_eq!(stats.occupied_voxels, 26);
        assert_eq!(stats.weight_histogram.iter().map(|b| b.1).sum::<usize>(), 26);
    }

    #[test]
    fn from_grids_enforces_invariants() {
        let cfg = VolumeConfig::new([1, 1, 2], 0.01, [0.0; 3], 0.02);
        assert!(VoxelVolume::from_grids(cfg.clone(), &[0.5, 0.0], &[1.0, 1.0], &[0, 0], &[0.0, 0.0]).is_err());
        assert!(VoxelVolume::from_grids(cfg.clone(), &[0.0, 0.0], &[-1.0, 1.0], &[0, 0], &[0.0, 0.0]).is_err());
        assert!(VoxelVolume::from_grids(cfg.clone(), &[0.0, 0.0], &[1.0, 1.0], &[3, 0], &[0.0, 0.0]).is_err());
        assert!(VoxelVolume::from_grids(cfg, &[0.01, -0.02], &[1.0, 0.0], &[3, 0], &[0.5, 0.0]).is_ok());
    }
}
