//! Camera-aligned local windows: trilinear extraction from the global grids
//! and splatting of per-sample updates back with the same weights.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{check_window, DepthFrame, Intrinsics, Pose};
use crate::volume::VoxelVolume;

/// The 8 lattice neighbours of a continuous voxel coordinate with their
/// trilinear weights, or `None` when the coordinate is outside the lattice.
///
/// Corner `c` has offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)` from the lower
/// corner. Weights sum to one.
#[inline]
pub fn trilinear_corners(dims: [usize; 3], coord: &Vector3<f64>) -> Option<[(usize, f64); 8]> {
    let mut base = [0usize; 3];
    let mut frac = [0f64; 3];
    let mut next = [0usize; 3];
    for a in 0..3 {
        let c = coord[a];
        let max = (dims[a] - 1) as f64;
        if !(c >= 0.0 && c <= max) {
            return None;
        }
        let b = (c.floor() as usize).min(dims[a].saturating_sub(2));
        base[a] = b;
        frac[a] = c - b as f64;
        next[a] = (b + 1).min(dims[a] - 1);
    }
    let stride_y = dims[2];
    let stride_x = dims[1] * dims[2];
    let xs = [base[0] * stride_x, next[0] * stride_x];
    let ys = [base[1] * stride_y, next[1] * stride_y];
    let zs = [base[2], next[2]];
    let wx = [1.0 - frac[0], frac[0]];
    let wy = [1.0 - frac[1], frac[1]];
    let wz = [1.0 - frac[2], frac[2]];
    let mut out = [(0usize, 0f64); 8];
    for (c, slot) in out.iter_mut().enumerate() {
        let (i, j, k) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
        *slot = (xs[i] + ys[j] + zs[k], wx[i] * wy[j] * wz[k]);
    }
    Some(out)
}

/// Values read from the global grids along every pixel ray, `H x W x T`,
/// ray-major (`ray = v * W + u`, sample index `ray * T + k`).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWindow {
    pub width: usize,
    pub height: usize,
    /// Samples per ray (odd).
    pub window: usize,
    /// Metric distance between consecutive samples along a ray.
    pub spacing: f64,
    pub tsdf: Vec<f32>,
    pub weight: Vec<f32>,
    pub label: Vec<u8>,
    pub score: Vec<f32>,
    /// Continuous voxel coordinate of each sample.
    pub sample_coords: Vec<[f64; 3]>,
    /// One flag per ray: positive depth and every sample inside the grid.
    pub valid: Vec<bool>,
    /// Observed depth per ray (0 for invalid rays).
    pub depth: Vec<f32>,
}

impl LocalWindow {
    pub fn rays(&self) -> usize {
        self.width * self.height
    }

    pub fn samples(&self) -> usize {
        self.rays() * self.window
    }

    pub fn valid_rays(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn center_index(&self) -> usize {
        self.window / 2
    }

    pub(crate) fn check_shape(&self, name: &str, len: usize) -> Result<()> {
        if len != self.samples() {
            return Err(Error::Shape(format!(
                "{name} has {len} values, window is {}x{}x{}",
                self.height, self.width, self.window
            )));
        }
        Ok(())
    }
}

struct RayOut<'a> {
    tsdf: &'a mut [f32],
    weight: &'a mut [f32],
    label: &'a mut [u8],
    score: &'a mut [f32],
    coords: &'a mut [[f64; 3]],
}

/// Extracts the local window around `depth` from `volume`.
///
/// TSDF, weight and score are trilinearly interpolated; the label is taken
/// from the corner with the largest trilinear weight. A ray with
/// non-positive depth or any sample outside the grid is invalid and zeroed.
pub fn extract(
    volume: &VoxelVolume,
    depth: &DepthFrame,
    intrinsics: &Intrinsics,
    pose: &Pose,
    window: usize,
) -> Result<LocalWindow> {
    check_window(window)?;
    depth.check_matches(intrinsics)?;
    let (w, h) = (depth.width as usize, depth.height as usize);
    let n = w * h * window;
    let mut out = LocalWindow {
        width: w,
        height: h,
        window,
        spacing: volume.voxel_size(),
        tsdf: vec![0.0; n],
        weight: vec![0.0; n],
        label: vec![0; n],
        score: vec![0.0; n],
        sample_coords: vec![[0.0; 3]; n],
        valid: vec![false; w * h],
        depth: vec![0.0; w * h],
    };

    let half = (window / 2) as f64;
    let rot = pose.rotation();
    let origin_vox = volume.world_to_voxel(pose.translation());
    let inv_voxel = 1.0 / volume.voxel_size();
    // samples are one voxel apart
    let step = out.spacing * inv_voxel;

    let LocalWindow { tsdf, weight, label, score, sample_coords, valid, depth: ray_depth, .. } = &mut out;
    tsdf.par_chunks_mut(window)
        .zip(weight.par_chunks_mut(window))
        .zip(label.par_chunks_mut(window))
        .zip(score.par_chunks_mut(window))
        .zip(sample_coords.par_chunks_mut(window))
        .zip(valid.par_iter_mut())
        .zip(ray_depth.par_iter_mut())
        .enumerate()
        .for_each(|(ray, ((((((t, wt), l), s), c), ok), rd))| {
            let d = depth.data[ray];
            if !(d > 0.0) || !d.is_finite() {
                return;
            }
            let (u, v) = ((ray % w) as f64, (ray / w) as f64);
            let cam = intrinsics.backproject_unit_z(u, v);
            let dir = (rot * cam).normalize();
            let center = origin_vox + rot * cam * (f64::from(d) * inv_voxel);
            let mut o = RayOut { tsdf: t, weight: wt, label: l, score: s, coords: c };
            if sample_ray(volume, &center, &(dir * step), half, &mut o) {
                *ok = true;
                *rd = d;
            } else {
                o.tsdf.fill(0.0);
                o.weight.fill(0.0);
                o.label.fill(0);
                o.score.fill(0.0);
                o.coords.fill([0.0; 3]);
            }
        });
    Ok(out)
}

fn sample_ray(
    volume: &VoxelVolume,
    center: &Vector3<f64>,
    step: &Vector3<f64>,
    half: f64,
    out: &mut RayOut<'_>,
) -> bool {
    for k in 0..out.tsdf.len() {
        let offset = k as f64 - half;
        let coord = if offset == 0.0 { *center } else { center + step * offset };
        let Some(s) = interpolate(volume, &coord) else {
            return false;
        };
        out.tsdf[k] = s.tsdf;
        out.weight[k] = s.weight;
        out.score[k] = s.score;
        out.label[k] = s.label;
        out.coords[k] = [coord.x, coord.y, coord.z];
    }
    true
}

/// Grid values read at one continuous voxel coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSample {
    pub tsdf: f32,
    pub weight: f32,
    pub score: f32,
    pub label: u8,
}

/// Trilinear read of TSDF, weight and score, with the label of the corner
/// carrying the largest weight (first corner on ties). `None` outside the
/// lattice.
#[inline]
pub fn interpolate(volume: &VoxelVolume, coord: &Vector3<f64>) -> Option<GridSample> {
    let corners = trilinear_corners(volume.dims(), coord)?;
    let (mut t, mut w, mut s) = (0f64, 0f64, 0f64);
    let mut best = (0usize, -1f64);
    for &(idx, cw) in &corners {
        t += cw * f64::from(volume.tsdf(idx));
        w += cw * f64::from(volume.weight(idx));
        s += cw * f64::from(volume.score(idx));
        if cw > best.1 {
            best = (idx, cw);
        }
    }
    Some(GridSample { tsdf: t as f32, weight: w as f32, score: s as f32, label: volume.label(best.0) })
}

/// Per-voxel `(sum w, sum w*v)` for the voxels touched by one frame.
///
/// Backed by a dense slot table so accumulation is O(1) per contribution;
/// the table is reused across frames and only touched entries are reset.
#[derive(Debug, Clone, Default)]
pub struct SplatAccumulator {
    slot: Vec<u32>,
    touched: Vec<u32>,
    sum_w: Vec<f64>,
    sum_wv: Vec<f64>,
}

const UNTOUCHED: u32 = u32::MAX;

impl SplatAccumulator {
    pub fn new(voxels: usize) -> Self {
        Self { slot: vec![UNTOUCHED; voxels], ..Default::default() }
    }

    pub fn clear(&mut self) {
        for &v in &self.touched {
            self.slot[v as usize] = UNTOUCHED;
        }
        self.touched.clear();
        self.sum_w.clear();
        self.sum_wv.clear();
    }

    fn ensure_size(&mut self, voxels: usize) {
        if self.slot.len() != voxels {
            self.slot = vec![UNTOUCHED; voxels];
            self.touched.clear();
            self.sum_w.clear();
            self.sum_wv.clear();
        }
    }

    #[inline]
    pub fn add(&mut self, voxel: usize, w: f64, wv: f64) {
        let s = self.slot[voxel];
        if s == UNTOUCHED {
            self.slot[voxel] = self.touched.len() as u32;
            self.touched.push(voxel as u32);
            self.sum_w.push(w);
            self.sum_wv.push(wv);
        } else {
            self.sum_w[s as usize] += w;
            self.sum_wv[s as usize] += wv;
        }
    }

    /// Number of touched voxels.
    pub fn len(&self) -> usize {
        self.touched.len()
    }

    pub fn is_empty(&self) -> bool {
        self.touched.is_empty()
    }

    pub fn get(&self, voxel: usize) -> Option<(f64, f64)> {
        match self.slot.get(voxel) {
            Some(&s) if s != UNTOUCHED => Some((self.sum_w[s as usize], self.sum_wv[s as usize])),
            _ => None,
        }
    }

    /// `(voxel, sum_w, sum_wv)` in first-touch order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.touched
            .iter()
            .zip(&self.sum_w)
            .zip(&self.sum_wv)
            .map(|((&v, &w), &wv)| (v as usize, w, wv))
    }

    pub fn touched(&self) -> impl Iterator<Item = usize> + '_ {
        self.touched.iter().map(|&v| v as usize)
    }
}

/// Distributes `updates` weighted by `update_weights` onto the 8 corner voxels
/// of every valid sample, using the extraction's trilinear weights.
pub fn splat(
    volume: &VoxelVolume,
    window: &LocalWindow,
    updates: &[f32],
    update_weights: &[f32],
) -> Result<SplatAccumulator> {
    let mut acc = SplatAccumulator::new(volume.len());
    splat_into(volume, window, updates, update_weights, &mut acc)?;
    Ok(acc)
}

/// As [`splat`], reusing `acc` (which is cleared first).
pub fn splat_into(
    volume: &VoxelVolume,
    window: &LocalWindow,
    updates: &[f32],
    update_weights: &[f32],
    acc: &mut SplatAccumulator,
) -> Result<()> {
    window.check_shape("updates", updates.len())?;
    window.check_shape("update weights", update_weights.len())?;
    acc.ensure_size(volume.len());
    acc.clear();
    let dims = volume.dims();
    let t = window.window;
    for (ray, _) in window.valid.iter().enumerate().filter(|(_, &ok)| ok) {
        for i in ray * t..(ray + 1) * t {
            let uw = f64::from(update_weights[i]);
            if !(uw > 0.0) {
                continue;
            }
            let v = f64::from(updates[i]);
            let [x, y, z] = window.sample_coords[i];
            let Some(corners) = trilinear_corners(dims, &Vector3::new(x, y, z)) else {
                continue;
            };
            for (idx, cw) in corners {
                let w = uw * cw;
                if w > 0.0 {
                    acc.add(idx, w, w * v);
                }
            }
        }
    }
    Ok(())
}
