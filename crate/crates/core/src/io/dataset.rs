//! On-disk dataset layout:
//!
//! ```text
//! root/config.toml       RunConfig
//! root/intrinsics.toml   Intrinsics
//! root/trajectory.txt    one pose per frame
//! root/depth/NNNNNN.png  16-bit depth
//! root/label/NNNNNN.png  8-bit labels (optional)
//! root/score/NNNNNN.png  8-bit scores (optional)
//! ```
//!
//! Frame `NNNNNN` uses trajectory line `NNNNNN` (0-based).

use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::depth::{load_depth, write_depth};
use super::labels::{load_labels, write_labels};
use super::trajectory::{load_trajectory, save_trajectory};
use crate::error::{Error, Result};
use crate::geometry::{DepthFrame, Intrinsics, Pose};
use crate::semantics::LabelFrame;

pub const CONFIG_FILE: &str = "config.toml";
pub const INTRINSICS_FILE: &str = "intrinsics.toml";
pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const DEPTH_DIR: &str = "depth";
pub const LABEL_DIR: &str = "label";
pub const SCORE_DIR: &str = "score";

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub depth_path: PathBuf,
    pub label_path: Option<PathBuf>,
    pub score_path: Option<PathBuf>,
    pub pose: Pose,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub config: RunConfig,
    pub intrinsics: Intrinsics,
    pub frames: Vec<FrameRecord>,
}

fn frame_name(index: usize) -> String {
    format!("{index:06}.png")
}

impl Dataset {
    /// Opens the dataset at `root`. `config` replaces `root/config.toml`
    /// when given.
    pub fn open(root: &Path, config: Option<RunConfig>) -> Result<Self> {
        let config = match config {
            Some(c) => {
                c.validate()?;
                c
            }
            None => RunConfig::load(&root.join(CONFIG_FILE))?,
        };
        let ipath = root.join(INTRINSICS_FILE);
        let intrinsics: Intrinsics = super::load_toml(&ipath)?;
        intrinsics.validate().map_err(|e| Error::format(&ipath, e.to_string()))?;
        let poses = load_trajectory(&root.join(TRAJECTORY_FILE), config.dataset.pose_convention)?;

        let depth_dir = root.join(DEPTH_DIR);
        let entries = std::fs::read_dir(&depth_dir).map_err(|e| Error::io(&depth_dir, e))?;
        let mut indices = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&depth_dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("png") {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let index: usize = stem
                .parse()
                .map_err(|_| Error::format(&path, "depth file name is not a frame number"))?;
            indices.push(index);
        }
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::format(&depth_dir, format!("frame {} appears twice", w[0])));
        }
        let optional = |dir: &str, index: usize| {
            let p = root.join(dir).join(frame_name(index));
            p.is_file().then_some(p)
        };
        let frames = indices
            .into_iter()
            .map(|index| {
                let pose = *poses.get(index).ok_or_else(|| Error::Pose {
                    index,
                    msg: format!("trajectory has only {} poses", poses.len()),
                })?;
                Ok(FrameRecord {
                    index,
                    depth_path: depth_dir.join(frame_name(index)),
                    label_path: optional(LABEL_DIR, index),
                    score_path: optional(SCORE_DIR, index),
                    pose,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { root: root.to_path_buf(), config, intrinsics, frames })
    }

    /// Loads a frame's depth (converted to z-depth) and labels if present.
    pub fn load_frame(&self, record: &FrameRecord) -> Result<(DepthFrame, Option<LabelFrame>)> {
        let conv = &self.config.dataset;
        let mut depth = load_depth(&record.depth_path, conv.depth_scale)?;
        depth.check_matches(&self.intrinsics).map_err(|e| Error::format(&record.depth_path, e.to_string()))?;
        depth.to_z_depth(conv.depth_kind, &self.intrinsics);
        let labels = match &record.label_path {
            Some(p) => {
                let f = load_labels(p, record.score_path.as_deref(), self.config.volume.class_count)?;
                if (f.width, f.height) != (depth.width, depth.height) {
                    return Err(Error::format(p, "label image size differs from depth"));
                }
                Some(f)
            }
            None => None,
        };
        Ok((depth, labels))
    }
}

/// Writes a dataset frame by frame.
#[derive(Debug)]
pub struct DatasetWriter {
    root: PathBuf,
    scale: f64,
    frames: usize,
}

impl DatasetWriter {
    pub fn create(root: &Path, config: &RunConfig, intrinsics: &Intrinsics) -> Result<Self> {
        config.validate()?;
        for dir in [DEPTH_DIR, LABEL_DIR, SCORE_DIR] {
            let d = root.join(dir);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        config.save(&root.join(CONFIG_FILE))?;
        super::save_toml(&root.join(INTRINSICS_FILE), intrinsics)?;
        Ok(Self { root: root.to_path_buf(), scale: config.dataset.depth_scale, frames: 0 })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes frame number `self.frames` and advances.
    pub fn write_frame(&mut self, depth: &DepthFrame, labels: Option<&LabelFrame>) -> Result<()> {
        let name = frame_name(self.frames);
        write_depth(&self.root.join(DEPTH_DIR).join(&name), depth, self.scale)?;
        if let Some(l) = labels {
            let score = self.root.join(SCORE_DIR).join(&name);
            write_labels(&self.root.join(LABEL_DIR).join(&name), Some(&score), l)?;
        }
        self.frames += 1;
        Ok(())
    }

    pub fn finish(self, poses: &[Pose], convention: super::PoseConvention) -> Result<usize> {
        if poses.len() != self.frames {
            return Err(Error::Config(format!("{} poses for {} frames", poses.len(), self.frames)));
        }
        save_trajectory(&self.root.join(TRAJECTORY_FILE), poses, convention)?;
        Ok(self.frames)
    }
}
