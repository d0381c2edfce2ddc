//! Max-confidence label fusion.
//!
//! Every sample of a valid ray carries its pixel's label and score. Each voxel
//! touched by the frame's splat keeps the best same-frame candidate (highest
//! score, ties to the lowest ray index) and then applies
//!
//! ```text
//! S_t = max(s, S_{t-1})
//! L_t = l        if s >= S_{t-1}
//!       L_{t-1}  otherwise
//! ```

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::volume::{ScalarGrid, VoxelVolume};
use crate::window::{trilinear_corners, LocalWindow};

/// Per-pixel class ids and confidences. Id 0 means unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFrame {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u8>,
    pub scores: Vec<f32>,
    pub class_count: u16,
}

impl LabelFrame {
    pub fn new(width: u32, height: u32, labels: Vec<u8>, scores: Vec<f32>, class_count: u16) -> Result<Self> {
        let n = width as usize * height as usize;
        if labels.len() != n || scores.len() != n {
            return Err(Error::Shape(format!(
                "label frame buffers ({} labels, {} scores) do not match {width}x{height}",
                labels.len(),
                scores.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| u16::from(l) > class_count) {
            return Err(Error::Config(format!("label {l} exceeds class count {class_count}")));
        }
        if let Some(&s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Config(format!("score {s} outside [0, 1]")));
        }
        Ok(Self { width, height, labels, scores, class_count })
    }

    /// Frame with every pixel labeled `label` at full confidence.
    pub fn uniform(width: u32, height: u32, label: u8, class_count: u16) -> Result<Self> {
        let n = width as usize * height as usize;
        Self::new(width, height, vec![label; n], vec![1.0; n], class_count)
    }
}

/// Labels and scores lifted onto every window sample (`H x W x T`).
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedLabels {
    pub labels: Vec<u8>,
    pub scores: Vec<f32>,
}

/// Assigns each valid ray's pixel label and score to all of its samples.
pub fn lift_labels(frame: &LabelFrame, window: &LocalWindow) -> Result<LiftedLabels> {
    if frame.width as usize != window.width || frame.height as usize != window.height {
        return Err(Error::Config(format!(
            "label frame is {}x{} but window is {}x{}",
            frame.width, frame.height, window.width, window.height
        )));
    }
    let t = window.window;
    let mut labels = vec![0u8; window.samples()];
    let mut scores = vec![0f32; window.samples()];
    for (ray, _) in window.valid.iter().enumerate().filter(|(_, &ok)| ok) {
        labels[ray * t..(ray + 1) * t].fill(frame.labels[ray]);
        scores[ray * t..(ray + 1) * t].fill(frame.scores[ray]);
    }
    Ok(LiftedLabels { labels, scores })
}

/// A same-frame label candidate for one voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub label: u8,
    pub score: f32,
    pub ray: u32,
}

impl Candidate {
    /// Whether `self` beats `other`: higher score, then lower ray index.
    #[inline]
    pub fn beats(&self, other: &Candidate) -> bool {
        self.score > other.score || (self.score == other.score && self.ray < other.ray)
    }
}

/// Applies the max-confidence rule to one voxel state `(label, score)`.
#[inline]
pub fn apply_rule(prior: (u8, f32), incoming: (u8, f32)) -> (u8, f32) {
    let (l_prev, s_prev) = prior;
    let (l, s) = incoming;
    let label = if s >= s_prev { l } else { l_prev };
    (label, s.max(s_prev))
}

/// Best candidate per touched voxel for one frame.
#[derive(Debug, Clone, Default)]
pub struct LabelAccumulator {
    slot: Vec<u32>,
    touched: Vec<u32>,
    best: Vec<Candidate>,
}

const UNTOUCHED: u32 = u32::MAX;

impl LabelAccumulator {
    pub fn new(voxels: usize) -> Self {
        Self { slot: vec![UNTOUCHED; voxels], ..Default::default() }
    }

    fn reset(&mut self, voxels: usize) {
        if self.slot.len() != voxels {
            self.slot = vec![UNTOUCHED; voxels];
        } else {
            for &v in &self.touched {
                self.slot[v as usize] = UNTOUCHED;
            }
        }
        self.touched.clear();
        self.best.clear();
    }

    #[inline]
    pub fn offer(&mut self, voxel: usize, cand: Candidate) {
        let s = self.slot[voxel];
        if s == UNTOUCHED {
            self.slot[voxel] = self.touched.len() as u32;
            self.touched.push(voxel as u32);
            self.best.push(cand);
        } else if cand.beats(&self.best[s as usize]) {
            self.best[s as usize] = cand;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Candidate)> + '_ {
        self.touched.iter().zip(&self.best).map(|(&v, &c)| (v as usize, c))
    }

    pub fn len(&self) -> usize {
        self.touched.len()
    }

    pub fn is_empty(&self) -> bool {
        self.touched.is_empty()
    }
}

/// Integrates lifted labels into the volume's label/score grids.
///
/// Only voxels receiving nonzero splat weight (`update_weights` times the
/// trilinear corner weight) are updated. Candidates with label 0 or score 0
/// carry no information and are ignored. Returns the number of voxels whose
/// state was offered a candidate.
pub fn update_labels(
    volume: &mut VoxelVolume,
    window: &LocalWindow,
    lifted: &LiftedLabels,
    update_weights: &[f32],
) -> Result<usize> {
    let mut acc = LabelAccumulator::new(volume.len());
    update_labels_with(volume, window, lifted, update_weights, &mut acc)
}

/// As [`update_labels`], reusing the scratch accumulator.
pub fn update_labels_with(
    volume: &mut VoxelVolume,
    window: &LocalWindow,
    lifted: &LiftedLabels,
    update_weights: &[f32],
    acc: &mut LabelAccumulator,
) -> Result<usize> {
    window.check_shape("lifted labels", lifted.labels.len())?;
    window.check_shape("lifted scores", lifted.scores.len())?;
    window.check_shape("update weights", update_weights.len())?;
    acc.reset(volume.len());
    let dims = volume.dims();
    let t = window.window;
    for (ray, _) in window.valid.iter().enumerate().filter(|(_, &ok)| ok) {
        for i in ray * t..(ray + 1) * t {
            let (label, score) = (lifted.labels[i], lifted.scores[i]);
            if label == 0 || !(score > 0.0) || !(update_weights[i] > 0.0) {
                continue;
            }
            let [x, y, z] = window.sample_coords[i];
            let Some(corners) = trilinear_corners(dims, &Vector3::new(x, y, z)) else {
                continue;
            };
            let cand = Candidate { label, score, ray: ray as u32 };
            for (idx, cw) in corners {
                if f64::from(update_weights[i]) * cw > 0.0 {
                    acc.offer(idx, cand);
                }
            }
        }
    }
    apply_candidates(volume, acc);
    Ok(acc.len())
}

fn apply_candidates(volume: &mut VoxelVolume, acc: &LabelAccumulator) {
    let precision = volume.config().precision;
    for (voxel, cand) in acc.iter() {
        let prior = (volume.label[voxel], volume.score.get(voxel));
        // compare at storage precision so equal scores hit the >= branch
        let incoming = ScalarGrid::quantize(precision, cand.score);
        let (label, score) = apply_rule(prior, (cand.label, incoming));
        volume.label[voxel] = label;
        volume.score.set(voxel, score);
    }
}
