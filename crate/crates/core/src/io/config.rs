use std::path::Path;

use serde::{Deserialize, Serialize};

use super::depth::DEFAULT_DEPTH_SCALE;
use super::trajectory::PoseConvention;
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::geometry::DepthKind;
use crate::metrics::{DEFAULT_FSCORE_THRESHOLD, DEFAULT_SAMPLE_DENSITY, DEFAULT_SAMPLE_SEED};
use crate::synth::NoiseModel;
use crate::volume::VolumeConfig;

/// How a dataset stores depth, poses and class names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConventions {
    /// Raw depth units per meter.
    pub depth_scale: f64,
    pub pose_convention: PoseConvention,
    pub depth_kind: DepthKind,
    /// Names of classes 1..=N, in order.
    pub class_names: Vec<String>,
}

impl Default for DatasetConventions {
    fn default() -> Self {
        Self {
            depth_scale: DEFAULT_DEPTH_SCALE,
            pose_convention: PoseConvention::CamToWorld,
            depth_kind: DepthKind::ZDepth,
            class_names: Vec::new(),
        }
    }
}

impl DatasetConventions {
    /// Name of internal class id `id` (1-based), falling back to `class_<id>`.
    pub fn class_name(&self, id: u8) -> String {
        match id {
            0 => "unlabeled".into(),
            _ => self.class_names.get(usize::from(id) - 1).cloned().unwrap_or_else(|| format!("class_{id}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricDefaults {
    /// F-score distance threshold in meters.
    pub fscore_threshold: f64,
    /// Surface samples per square meter.
    pub sample_density: f64,
    pub sample_seed: u64,
    /// Voxel-to-vertex label transfer radius; defaults to two voxels.
    pub label_radius: Option<f64>,
}

impl Default for MetricDefaults {
    fn default() -> Self {
        Self {
            fscore_threshold: DEFAULT_FSCORE_THRESHOLD,
            sample_density: DEFAULT_SAMPLE_DENSITY,
            sample_seed: DEFAULT_SAMPLE_SEED,
            label_radius: None,
        }
    }
}

/// Everything a fusion run needs besides the frames themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub volume: VolumeConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub dataset: DatasetConventions,
    /// Noise applied by the synthetic generator.
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub metrics: MetricDefaults,
}

impl RunConfig {
    pub fn new(volume: VolumeConfig) -> Self {
        Self {
            volume,
            fusion: FusionConfig::default(),
            dataset: DatasetConventions::default(),
            noise: NoiseModel::none(),
            metrics: MetricDefaults::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.volume.validate()?;
        self.fusion.validate()?;
        self.noise.validate()?;
        if !(self.dataset.depth_scale > 0.0) {
            return Err(Error::Config("dataset.depth_scale must be positive".into()));
        }
        if self.dataset.class_names.len() > usize::from(self.volume.class_count) {
            return Err(Error::Config(format!(
                "{} class names for {} classes",
                self.dataset.class_names.len(),
                self.volume.class_count
            )));
        }
        let m = &self.metrics;
        if !(m.fscore_threshold > 0.0) || !(m.sample_density > 0.0) || m.label_radius.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::Config("metric threshold, density and radius must be positive".into()));
        }
        Ok(())
    }

    pub fn label_radius(&self) -> f64 {
        self.metrics.label_radius.unwrap_or(2.0 * self.volume.voxel_size)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = super::load_toml(path)?;
        cfg.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::save_toml(path, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        let mut cfg = RunConfig::new(VolumeConfig::new([4, 5, 6], 0.01, [0.1, 0.2, 0.3], 0.04).with_class_count(2));
        cfg.dataset.class_names = vec!["floor".into(), "wall".into()];
        cfg.save(&p).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap(), cfg);
        let text = std::fs::read_to_string(&p).unwrap() + "\nbogus = 1\n";
        std::fs::write(&p, text).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(Error::Format { .. })));
        std::fs::write(&p, "[volume]\ndims = [1, 1, 1]\nvoxel_size = 0.01\norigin = [0, 0, 0]\ntruncation = 0.02\ntypo = 3\n").unwrap();
        assert!(RunConfig::load(&p).is_err());
    }

    #[test]
    fn class_names() {
        let d = DatasetConventions { class_names: vec!["floor".into()], ..Default::default() };
        assert_eq!(d.class_name(1), "floor");
        assert_eq!(d.class_name(2), "class_2");
        assert_eq!(d.class_name(0), "unlabeled");
    }
}
