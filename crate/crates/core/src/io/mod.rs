//! Dataset ingestion, mesh and volume serialization, and run configuration.

mod checkpoint;
mod config;
mod dataset;
mod depth;
mod labels;
mod ply;
mod trajectory;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use config::{DatasetConventions, MetricDefaults, RunConfig};
pub use dataset::{
    Dataset, DatasetWriter, FrameRecord, CONFIG_FILE, DEPTH_DIR, INTRINSICS_FILE, LABEL_DIR, SCORE_DIR, TRAJECTORY_FILE,
};
pub use depth::{load_depth, write_depth, DEFAULT_DEPTH_SCALE};
pub use labels::{load_labels, write_labels, UNLABELED_RAW};
pub use ply::{class_color, read_mesh_ply, write_mesh_ply};
pub use trajectory::{load_trajectory, parse_trajectory, save_trajectory, PoseConvention};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses a TOML file into `T`, rejecting unknown keys where `T` does.
pub fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn save_toml<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    write_bytes(path, text.as_bytes())
}
