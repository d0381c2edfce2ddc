//! Online volumetric fusion of depth and semantic label frames.
//!
//! Depth frames are fused into a dense truncated signed distance grid with a
//! running weighted mean; per-pixel class labels are lifted onto the same
//! voxels and integrated with a max-confidence rule. The crate also ships an
//! analytic scene renderer used as ground truth, marching cubes meshing, and
//! the reconstruction / segmentation metrics used to score the result.
//!
//! The per-frame pipeline lives in [`fusion::Fuser`]:
//! extract a camera-aligned window from the global grids, assemble the
//! predictor input, predict local updates, splat them back with the same
//! trilinear weights, integrate, and update labels.

pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod meshing;
pub mod metrics;
pub mod semantics;
pub mod synth;
pub mod volume;
pub mod window;

pub use error::{Error, Result};
pub use fusion::{
    filter_outliers, ClassicPredictor, FrameReport, FusionConfig, FusionInput, FusionPredictor,
    Fuser, Prediction,
};
pub use geometry::{DepthFrame, Intrinsics, Pose};
pub use meshing::{marching_cubes, TriMesh};
pub use semantics::LabelFrame;
pub use volume::{StoragePrecision, VolumeConfig, VoxelVolume};
pub use window::{interpolate, LocalWindow};
