//! Per-frame fusion: assemble the predictor input from a local window,
//! predict TSDF updates, splat them, and integrate with the running weighted
//! mean
//!
//! ```text
//! V_t = (W_{t-1} V_{t-1} + sum w v) / (W_{t-1} + sum w)
//! W_t = W_{t-1} + sum w
//! ```
//!
//! where the sums run over all of the frame's splatted contributions to a
//! voxel.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_window, DepthFrame, Intrinsics, Pose};
use crate::semantics::{lift_labels, update_labels_with, LabelAccumulator, LabelFrame};
use crate::volume::{ScalarGrid, VoxelVolume};
use crate::window::{extract, splat_into, LocalWindow, SplatAccumulator};

pub const DEFAULT_WINDOW: usize = 9;
pub const DEFAULT_OUTLIER_THRESHOLD: f32 = 2.0;

fn default_window() -> usize {
    DEFAULT_WINDOW
}
fn default_threshold() -> f32 {
    DEFAULT_OUTLIER_THRESHOLD
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    /// Samples per ray in the extraction window (odd).
    #[serde(default = "default_window")]
    pub window: usize,
    /// Voxels with accumulated weight below this are treated as unknown when
    /// meshing and evaluating.
    #[serde(default = "default_threshold")]
    pub outlier_weight_threshold: f32,
    #[serde(default = "default_true")]
    pub semantics: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            outlier_weight_threshold: DEFAULT_OUTLIER_THRESHOLD,
            semantics: true,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        check_window(self.window)?;
        if !(self.outlier_weight_threshold >= 0.0) {
            return Err(Error::Config(format!(
                "outlier threshold must be >= 0, got {}",
                self.outlier_weight_threshold
            )));
        }
        Ok(())
    }
}

/// Predictor input: the observed depth (and optionally labels) next to the
/// extracted TSDF and weight windows. Borrowed from the frame and window.
#[derive(Debug, Clone, Copy)]
pub struct FusionInput<'a> {
    pub width: usize,
    pub height: usize,
    pub window: usize,
    /// Metric spacing between window samples.
    pub spacing: f64,
    /// Per-ray depth (`H x W`), 0 for invalid rays.
    pub depth: &'a [f32],
    /// Per-ray class ids; present only when the predictor consumes semantics.
    pub semantic: Option<&'a [u8]>,
    pub tsdf_window: &'a [f32],
    pub weight_window: &'a [f32],
    pub valid: &'a [bool],
}

impl<'a> FusionInput<'a> {
    pub fn assemble(window: &'a LocalWindow, semantic: Option<&'a [u8]>) -> Result<Self> {
        if let Some(s) = semantic {
            if s.len() != window.rays() {
                return Err(Error::Shape(format!(
                    "semantic frame has {} pixels, window has {} rays",
                    s.len(),
                    window.rays()
                )));
            }
        }
        Ok(Self {
            width: window.width,
            height: window.height,
            window: window.window,
            spacing: window.spacing,
            depth: &window.depth,
            semantic,
            tsdf_window: &window.tsdf,
            weight_window: &window.weight,
            valid: &window.valid,
        })
    }

    pub fn samples(&self) -> usize {
        self.width * self.height * self.window
    }
}

/// Local TSDF updates `v*` and their weights `w*`, both `H x W x T`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prediction {
    pub updates: Vec<f32>,
    pub weights: Vec<f32>,
}

/// Maps an assembled input to per-sample TSDF updates.
///
/// Implementations must return finite updates and non-negative weights; the
/// pipeline clamps updates to the truncation band afterwards.
pub trait FusionPredictor: Send + Sync {
    fn predict(&self, input: &FusionInput<'_>) -> Result<Prediction>;

    /// Whether the predictor consumes the semantic channel.
    fn uses_semantics(&self) -> bool {
        false
    }

    fn name(&self) -> &str;
}

/// Projective TSDF along each ray: sample `k` gets the signed distance
/// `(center - k) * spacing` to the observed surface, clamped to the band,
/// with unit weight unless it lies more than `truncation` behind the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicPredictor {
    pub truncation: f64,
}

impl ClassicPredictor {
    pub fn new(truncation: f64) -> Self {
        Self { truncation }
    }
}

impl FusionPredictor for ClassicPredictor {
    fn predict(&self, input: &FusionInput<'_>) -> Result<Prediction> {
        let t = input.window;
        let center = (t / 2) as f64;
        let trunc = self.truncation;
        let (ray_v, ray_w): (Vec<f32>, Vec<f32>) = (0..t)
            .map(|k| {
                let sdf = (center - k as f64) * input.spacing;
                let w = if sdf >= -trunc { 1.0 } else { 0.0 };
                (sdf.clamp(-trunc, trunc) as f32, w)
            })
            .unzip();
        let n = input.samples();
        let mut pred = Prediction { updates: vec![0.0; n], weights: vec![0.0; n] };
        for (ray, _) in input.valid.iter().enumerate().filter(|(_, &ok)| ok) {
            pred.updates[ray * t..(ray + 1) * t].copy_from_slice(&ray_v);
            pred.weights[ray * t..(ray + 1) * t].copy_from_slice(&ray_w);
        }
        Ok(pred)
    }

    fn name(&self) -> &str {
        "classic"
    }
}

/// Applies the running weighted mean to every voxel in `acc`. Voxels with no
/// incoming weight are left untouched. Returns the number of updated voxels.
pub fn integrate(volume: &mut VoxelVolume, acc: &SplatAccumulator) -> usize {
    let trunc = volume.truncation() as f32;
    let max_weight = volume.config().max_weight;
    let mut updated = 0;
    for (voxel, sum_w, sum_wv) in acc.iter() {
        if !(sum_w > 0.0) {
            continue;
        }
        let w_prev = f64::from(volume.weight.get(voxel));
        let v_prev = f64::from(volume.tsdf.get(voxel));
        let w_new = w_prev + sum_w;
        let v_new = ((w_prev * v_prev + sum_wv) / w_new) as f32;
        let mut w_new = w_new as f32;
        if let Some(cap) = max_weight {
            w_new = w_new.min(cap);
        }
        volume.tsdf.set(voxel, v_new.clamp(-trunc, trunc));
        volume.weight.set(voxel, w_new);
        updated += 1;
    }
    updated
}

/// Wall-clock time spent in each pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub extract: Duration,
    pub predict: Duration,
    pub integrate: Duration,
    pub semantic: Duration,
}

impl std::ops::AddAssign for StageTimings {
    fn add_assign(&mut self, o: Self) {
        self.extract += o.extract;
        self.predict += o.predict;
        self.integrate += o.integrate;
        self.semantic += o.semantic;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameReport {
    pub rays_valid: usize,
    pub voxels_touched: usize,
    pub labels_offered: usize,
    pub elapsed: Duration,
    pub stages: StageTimings,
}

/// Owns the per-frame scratch buffers so consecutive frames reuse them.
#[derive(Debug, Default)]
pub struct Fuser {
    config: FusionConfig,
    splat_acc: SplatAccumulator,
    label_acc: LabelAccumulator,
}

impl Fuser {
    pub fn new(config: FusionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, ..Default::default() })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    /// Fuses one frame: extract, predict, clamp, splat, integrate, and (when
    /// labels are given and semantics are enabled) update labels.
    ///
    /// A predictor returning malformed output fails with
    /// [`Error::PredictorFault`] and leaves the volume unchanged.
    pub fn fuse_frame(
        &mut self,
        volume: &mut VoxelVolume,
        depth: &DepthFrame,
        labels: Option<&LabelFrame>,
        intrinsics: &Intrinsics,
        pose: &Pose,
        predictor: &dyn FusionPredictor,
    ) -> Result<FrameReport> {
        let start = Instant::now();
        let mut stages = StageTimings::default();
        depth.check_matches(intrinsics)?;
        let labels = labels.filter(|_| self.config.semantics);
        if let Some(l) = labels {
            if l.width != depth.width || l.height != depth.height {
                return Err(Error::Config(format!(
                    "label frame is {}x{} but depth frame is {}x{}",
                    l.width, l.height, depth.width, depth.height
                )));
            }
        }

        let t0 = Instant::now();
        let window = extract(volume, depth, intrinsics, pose, self.config.window)?;
        stages.extract = t0.elapsed();

        let t0 = Instant::now();
        let semantic = if predictor.uses_semantics() { labels.map(|l| &l.labels[..]) } else { None };
        let input = FusionInput::assemble(&window, semantic)?;
        let mut pred = predictor.predict(&input)?;
        check_prediction(&pred, window.samples())?;
        let trunc = volume.truncation() as f32;
        for v in &mut pred.updates {
            *v = v.clamp(-trunc, trunc);
        }
        stages.predict = t0.elapsed();

        let t0 = Instant::now();
        splat_into(volume, &window, &pred.updates, &pred.weights, &mut self.splat_acc)?;
        let touched = integrate(volume, &self.splat_acc);
        stages.integrate = t0.elapsed();

        let t0 = Instant::now();
        let mut labels_offered = 0;
        if let Some(frame) = labels {
            let lifted = lift_labels(frame, &window)?;
            labels_offered = update_labels_with(volume, &window, &lifted, &pred.weights, &mut self.label_acc)?;
        }
        stages.semantic = t0.elapsed();

        #[cfg(debug_assertions)]
        self.debug_check(volume);

        Ok(FrameReport {
            rays_valid: window.valid_rays(),
            voxels_touched: touched,
            labels_offered,
            elapsed: start.elapsed(),
            stages,
        })
    }

    #[cfg(debug_assertions)]
    fn debug_check(&self, volume: &VoxelVolume) {
        let trunc = ScalarGrid::quantize(volume.config().precision, volume.truncation() as f32);
        for v in self.splat_acc.touched() {
            let (t, w, s) = (volume.tsdf(v), volume.weight(v), volume.score(v));
            debug_assert!(t.abs() <= trunc && w >= 0.0 && (0.0..=1.0).contains(&s));
            debug_assert!(s > 0.0 || volume.label(v) == 0);
        }
    }
}

fn check_prediction(pred: &Prediction, samples: usize) -> Result<()> {
    if pred.updates.len() != samples || pred.weights.len() != samples {
        return Err(Error::PredictorFault(format!(
            "expected {samples} updates and weights, got {} and {}",
            pred.updates.len(),
            pred.weights.len()
        )));
    }
    if let Some(i) = pred.updates.iter().position(|v| !v.is_finite()) {
        return Err(Error::PredictorFault(format!("non-finite update at sample {i}")));
    }
    if let Some(i) = pred.weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::PredictorFault(format!("invalid weight {} at sample {i}", pred.weights[i])));
    }
    Ok(())
}

/// One-shot convenience wrapper around [`Fuser::fuse_frame`].
pub fn fuse_frame(
    volume: &mut VoxelVolume,
    depth: &DepthFrame,
    labels: Option<&LabelFrame>,
    intrinsics: &Intrinsics,
    pose: &Pose,
    predictor: &dyn FusionPredictor,
    config: &FusionConfig,
) -> Result<FrameReport> {
    Fuser::new(config.clone())?.fuse_frame(volume, depth, labels, intrinsics, pose, predictor)
}

/// Copy of `volume` with every voxel below `threshold` weight marked unknown.
pub fn filter_outliers(volume: &VoxelVolume, threshold: f32) -> VoxelVolume {
    let mut out = volume.clone();
    if threshold > 0.0 {
        for i in 0..out.len() {
            if out.weight.get(i) < threshold {
                out.weight.set(i, 0.0);
            }
        }
    }
    out
}
