//! Acceptance criteria 1-10. Each test prints one PASS/FAIL line.
//!
//! Tests share one lock: criterion 9 measures throughput and the
//! reconstruction criteria are heavy, so they must not overlap.

mod common;

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use nalgebra::{UnitQuaternion, Vector3};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use semfuse::fusion::{integrate, ClassicPredictor, Fuser, FusionConfig};
use semfuse::geometry::{DepthFrame, Intrinsics, Pose};
use semfuse::io;
use semfuse::meshing::{marching_cubes, TriMesh};
use semfuse::metrics::{self, SamplingParams, SweepRow};
use semfuse::semantics::{apply_rule, Candidate, LabelAccumulator};
use semfuse::synth::{self, NoiseModel};
use semfuse::volume::{StoragePrecision, VolumeConfig, VoxelVolume};
use semfuse::window::{extract, interpolate, splat_into, LocalWindow, SplatAccumulator};

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- 1

#[test]
fn c01_streaming_matches_batch_mean() {
    let _g = serial();
    let start = Instant::now();
    let trunc = 0.04;
    let mut worst = [0f64; 2];
    for (p, precision) in [StoragePrecision::Half, StoragePrecision::Single].into_iter().enumerate() {
        let mut r = rng(11 + p as u64);
        let config = VolumeConfig::new([10, 10, 10], 0.01, [0.0; 3], trunc).with_precision(precision);
        let mut vol = VoxelVolume::new(config).unwrap();
        let n = vol.len();
        let contributions: Vec<Vec<(f64, f64)>> = (0..n)
            .map(|_| {
                let k = r.random_range(1..=100);
                (0..k).map(|_| (r.random_range(-trunc..=trunc), r.random_range(0.01..=1.0))).collect()
            })
            .collect();
        let mut acc = SplatAccumulator::new(n);
        for step in 0..100 {
            acc.clear();
            for (voxel, c) in contributions.iter().enumerate() {
                if let Some(&(v, w)) = c.get(step) {
                    acc.add(voxel, w, w * v);
                }
            }
            integrate(&mut vol, &acc);
        }
        for (voxel, c) in contributions.iter().enumerate() {
            let sw: f64 = c.iter().map(|(_, w)| w).sum();
            let swv: f64 = c.iter().map(|(v, w)| v * w).sum();
            let batch = (swv / sw).clamp(-trunc, trunc);
            worst[p] = worst[p].max((f64::from(vol.tsdf(voxel)) - batch).abs());
        }
    }
    let elapsed = start.elapsed();
    let ok = worst[0] <= 1e-3 && worst[1] <= 1e-6 && elapsed < Duration::from_secs(5);
    verdict(
        "1",
        ok,
        &format!("max |stream - batch| half {:.2e}, single {:.2e}, {:.2?}", worst[0], worst[1], elapsed),
    );
}

// ---------------------------------------------------------------- 2

/// Eight-corner trilinear sum written out independently of the library.
fn oracle_sample(vol: &VoxelVolume, c: [f64; 3]) -> (f64, f64, f64, u8) {
    let dims = vol.dims();
    let mut lo = [0usize; 3];
    let mut f = [0f64; 3];
    for a in 0..3 {
        let fl = c[a].floor();
        lo[a] = if fl as usize >= dims[a] - 1 { dims[a] - 2 } else { fl as usize };
        f[a] = c[a] - lo[a] as f64;
    }
    let (mut t, mut w, mut s) = (0.0, 0.0, 0.0);
    let mut best = (0u8, -1.0);
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let wt = (if dx == 1 { f[0] } else { 1.0 - f[0] })
                    * (if dy == 1 { f[1] } else { 1.0 - f[1] })
                    * (if dz == 1 { f[2] } else { 1.0 - f[2] });
                let i = vol.index(lo[0] + dx, lo[1] + dy, lo[2] + dz);
                t += wt * f64::from(vol.tsdf(i));
                w += wt * f64::from(vol.weight(i));
                s += wt * f64::from(vol.score(i));
                if wt > best.1 {
                    best = (vol.label(i), wt);
                }
            }
        }
    }
    (t, w, s, best.0)
}

fn random_volume(r: &mut ChaCha8Rng, dims: [usize; 3], voxel: f64, precision: StoragePrecision) -> VoxelVolume {
    let trunc = 4.0 * voxel;
    let config = VolumeConfig::new(dims, voxel, [0.0; 3], trunc).with_precision(precision).with_class_count(5);
    let n = config.voxel_count() as usize;
    let tsdf: Vec<f32> = (0..n).map(|_| r.random_range(-trunc..trunc) as f32).collect();
    let weight: Vec<f32> = (0..n).map(|_| r.random_range(0.0..20.0)).collect();
    let label: Vec<u8> = (0..n).map(|_| r.random_range(0..=5)).collect();
    let score: Vec<f32> = label.iter().map(|&l| if l == 0 { 0.0 } else { r.random_range(0.01..=1.0) }).collect();
    VoxelVolume::from_grids(config, &tsdf, &weight, &label, &score).unwrap()
}

#[test]
fn c02_trilinear_oracle_and_splat_conservation() {
    let _g = serial();
    let start = Instant::now();
    let mut r = rng(2);
    let mut max_err = 0f64;
    let mut label_mismatch = 0usize;
    let mut samples = 0usize;
    let mut check = |vol: &VoxelVolume, c: [f64; 3], got: (f32, f32, f32, u8)| {
        let (t, w, s, l) = oracle_sample(vol, c);
        for (a, b) in [(got.0, t), (got.1, w), (got.2, s)] {
            // outputs are f32, so compare relative to the value's scale
            max_err = max_err.max((f64::from(a) - b).abs() / b.abs().max(1.0));
        }
        label_mismatch += usize::from(got.3 != l);
        samples += 1;
    };

    // direct reads at random continuous coordinates
    for precision in [StoragePrecision::Half, StoragePrecision::Single] {
        let vol = random_volume(&mut r, [23, 17, 29], 0.02, precision);
        let dims = vol.dims();
        for _ in 0..50_000 {
            let c = [0, 1, 2].map(|a| r.random_range(0.0..=(dims[a] - 1) as f64));
            let g = interpolate(&vol, &Vector3::from(c)).unwrap();
            check(&vol, c, (g.tsdf, g.weight, g.score, g.label));
        }
    }

    // windows extracted from random cameras inside the volume
    let mut coord_err = 0f64;
    let vol = random_volume(&mut r, [60, 60, 60], 0.05, StoragePrecision::Half);
    let k = Intrinsics::new(12.0, 12.0, 8.0, 6.0, 16, 12).unwrap();
    let mut extracted = 0;
    while extracted < 100_000 {
        let q = UnitQuaternion::from_euler_angles(
            r.random_range(-3.1..3.1),
            r.random_range(-1.5..1.5),
            r.random_range(-3.1..3.1),
        );
        let eye = Vector3::new(r.random_range(1.3..1.6), r.random_range(1.3..1.6), r.random_range(1.3..1.6));
        let pose = Pose::new(*q.to_rotation_matrix().matrix(), eye).unwrap();
        let data: Vec<f32> = (0..k.pixel_count()).map(|_| r.random_range(0.2..0.7)).collect();
        let depth = DepthFrame::new(16, 12, data).unwrap();
        let win = extract(&vol, &depth, &k, &pose, 9).unwrap();
        for ray in 0..win.rays() {
            assert!(win.valid[ray], "camera inside the grid sees every sample");
            let (u, v) = ((ray % 16) as f64, (ray / 16) as f64);
            let cam = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
            let center = pose.transform_point(&(cam * f64::from(depth.data[ray])));
            let dir = pose.rotation() * cam.normalize();
            for j in 0..9 {
                let i = ray * 9 + j;
                let world = center + dir * (0.05 * (j as f64 - 4.0));
                let expect = world / 0.05;
                let c = win.sample_coords[i];
                coord_err = coord_err.max((Vector3::from(c) - expect).amax());
                check(&vol, c, (win.tsdf[i], win.weight[i], win.score[i], win.label[i]));
                extracted += 1;
            }
        }
    }

    // splat conservation, one sample per window
    let mut splat_err = 0f64;
    let mut acc = SplatAccumulator::new(vol.len());
    let dims = vol.dims();
    for _ in 0..20_000 {
        let c = [0, 1, 2].map(|a| r.random_range(0.0..=(dims[a] - 1) as f64));
        let (v, w) = (r.random_range(-0.2f32..0.2), r.random_range(0.01f32..5.0));
        let win = LocalWindow {
            width: 1,
            height: 1,
            window: 1,
            spacing: vol.voxel_size(),
            tsdf: vec![0.0],
            weight: vec![0.0],
            label: vec![0],
            score: vec![0.0],
            sample_coords: vec![c],
            valid: vec![true],
            depth: vec![1.0],
        };
        splat_into(&vol, &win, &[v], &[w], &mut acc).unwrap();
        let (sw, swv) = acc.iter().fold((0.0, 0.0), |(a, b), (_, w, wv)| (a + w, b + wv));
        splat_err = splat_err.max((sw - f64::from(w)).abs()).max((swv - f64::from(w) * f64::from(v)).abs());
    }

    let elapsed = start.elapsed();
    let ok = max_err <= 1e-6
        && label_mismatch == 0
        && coord_err <= 1e-9
        && splat_err <= 1e-9
        && elapsed < Duration::from_secs(10);
    verdict(
        "2",
        ok,
        &format!(
            "{samples} samples, max err {max_err:.2e}, label mismatches {label_mismatch}, coord err {coord_err:.2e}, \
             splat err {splat_err:.2e}, {elapsed:.2?}"
        ),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn c03_noiseless_sphere() {
    let _g = serial();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let (report, rms) = pool.install(|| {
        let sc = sphere_scenario(256, 24);
        let vol = sc.fuse(&NoiseModel::none(), false);
        let mesh = marching_cubes(&vol, 0.0);
        let report = metrics::fscore(&mesh, &sc.gt_mesh(), 0.01, &SamplingParams::default()).unwrap();
        (report, vertex_radius_rms(&mesh, Vector3::zeros(), SPHERE_RADIUS))
    });
    let elapsed = start.elapsed();
    let ok = report.f1 >= 99.0 && rms <= 0.005 && elapsed < Duration::from_secs(60);
    verdict("3", ok, &format!("F {:.3}%, radius RMS {:.3} mm, {:.2?} single-threaded", report.f1, rms * 1e3, elapsed));
}

// ---------------------------------------------------------------- 4, 5

const SWEEP: [f32; 5] = [0.0, 1.0, 2.0, 4.0, 8.0];
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Sweep rows for the noisy sphere, one list per seed. Shared by 4 and 5.
fn noisy_sweeps() -> &'static Vec<Vec<SweepRow>> {
    static CACHE: OnceLock<Vec<Vec<SweepRow>>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let sc = sphere_scenario(256, 24);
        let gt = sc.gt_mesh();
        SEEDS
            .iter()
            .map(|&seed| {
                let vol = sc.fuse(&table_noise(seed), false);
                metrics::outlier_sweep(&vol, &gt, &SWEEP, 0.01, &SamplingParams::default()).unwrap()
            })
            .collect()
    })
}

#[test]
fn c04_noisy_sphere_outlier_filter() {
    let _g = serial();
    let sweeps = noisy_sweeps();
    let mut ok = true;
    let mut detail = Vec::new();
    for (seed, rows) in SEEDS.iter().zip(sweeps) {
        let f0 = rows.iter().find(|r| r.threshold == 0.0).unwrap().report.f1;
        let f2 = rows.iter().find(|r| r.threshold == 2.0).unwrap().report.f1;
        ok &= f2 >= 85.0 && f2 > f0;
        detail.push(format!("seed {seed}: F0 {f0:.2} F2 {f2:.2}"));
    }
    verdict("4", ok, &detail.join("; "));
}

#[test]
fn c05_sweep_shape() {
    let _g = serial();
    let sweeps = noisy_sweeps();
    let mut violations = 0;
    for rows in sweeps {
        for pair in rows.windows(2) {
            let (a, b) = (&pair[0].report, &pair[1].report);
            violations += usize::from(b.precision < a.precision) + usize::from(b.recall > a.recall);
        }
    }
    let cols = |rows: &Vec<SweepRow>| {
        rows.iter().map(|r| format!("{}:{:.2}/{:.2}", r.threshold, r.report.precision, r.report.recall)).collect::<Vec<_>>().join(" ")
    };
    verdict("5", violations == 0, &format!("{violations} monotonicity violations; seed 0 P/R {}", cols(&sweeps[0])));
}

// ---------------------------------------------------------------- 6

#[test]
fn c06_semantic_update_rules_and_room_iou() {
    let _g = serial();
    let mut r = rng(6);
    let mut violations = 0usize;
    // a few discrete score levels so ties are frequent
    let levels = [0.0f32, 0.25, 0.5, 0.75, 1.0];
    for _ in 0..10_000 {
        let len = r.random_range(1..=20);
        let seq: Vec<(u8, f32)> = (0..len)
            .map(|_| (r.random_range(1..=6), if r.random_bool(0.5) { *levels.choose(&mut r).unwrap() } else { r.random() }))
            .collect();
        let mut state = (0u8, 0f32);
        for &inc in &seq {
            let next = apply_rule(state, inc);
            violations += usize::from(next.1 < state.1);
            violations += usize::from(apply_rule(next, inc) != next);
            if inc.1 >= state.1 {
                violations += usize::from(next.0 != inc.0);
            } else {
                violations += usize::from(next != state);
            }
            state = next;
        }
        // closed form: max score, label of its last occurrence
        let max = seq.iter().map(|s| s.1).fold(0.0, f32::max);
        let last = seq.iter().rev().find(|s| s.1 == max).unwrap().0;
        violations += usize::from(state != (last, max));

        // same-frame candidates: any offer order picks the same winner
        let mut cands: Vec<Candidate> = seq
            .iter()
            .enumerate()
            .map(|(i, &(label, score))| Candidate { label, score, ray: i as u32 })
            .collect();
        let expect = cands.iter().fold(cands[0], |b, c| if c.score > b.score || (c.score == b.score && c.ray < b.ray) { *c } else { b });
        for _ in 0..3 {
            cands.shuffle(&mut r);
            let mut acc = LabelAccumulator::new(1);
            for c in &cands {
                acc.offer(0, *c);
            }
            violations += usize::from(acc.iter().next().unwrap().1 != expect);
        }
    }

    let sc = room_scenario(256, 60);
    let vol = sc.fuse(&NoiseModel::none(), true);
    let gt = sc.gt_mesh();
    let pred = metrics::transfer_volume_labels(&vol, &metrics::mesh_points(&gt), 2.0 * sc.config.voxel_size).unwrap();
    let report = metrics::iou_per_class(&pred, &gt.vertex_labels, 2).unwrap();
    let ious: Vec<f64> = report.per_class.iter().map(|c| c.iou).collect();
    let ok = violations == 0 && ious.len() == 2 && ious.iter().all(|&v| v >= 0.95);
    verdict(
        "6",
        ok,
        &format!("10^4 sequences, {violations} rule violations; room IoU floor {:.4} walls {:.4}", ious[0], ious[1]),
    );
}

// ---------------------------------------------------------------- 7

fn brute_fusion_loss(pred: &[f32], gt: &[f32], t: usize, valid: &[bool]) -> f64 {
    let mut total = 0.0;
    for ray in 0..valid.len() {
        if !valid[ray] {
            continue;
        }
        let p: Vec<f64> = (0..t).map(|k| f64::from(pred[ray * t + k])).collect();
        let g: Vec<f64> = (0..t).map(|k| f64::from(gt[ray * t + k])).collect();
        let l1 = p.iter().zip(&g).map(|(a, b)| (a - b).abs()).sum::<f64>() / t as f64;
        let l2 = p.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / t as f64;
        let dot: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
        let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
        let ng = g.iter().map(|b| b * b).sum::<f64>().sqrt();
        let lc = if np == 0.0 || ng == 0.0 { 0.0 } else { 1.0 - dot / (np * ng) };
        total += l1 + 10.0 * l2 + 0.1 * lc;
    }
    total
}

/// Threshold branch when at least `k` losses exceed `th`, else the `k`
/// largest, found by repeated selection on the unsorted input.
fn brute_bootstrap(losses: &[f64], k: usize, th: f64) -> f64 {
    if losses.len() <= k {
        return losses.iter().sum();
    }
    let above: Vec<f64> = losses.iter().copied().filter(|&l| l > th).collect();
    if above.len() >= k {
        return above.iter().sum();
    }
    let mut taken = vec![false; losses.len()];
    let mut sum = 0.0;
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..losses.len() {
            if !taken[i] && best.is_none_or(|b| losses[i] > losses[b]) {
                best = Some(i);
            }
        }
        taken[best.unwrap()] = true;
        sum += losses[best.unwrap()];
    }
    sum
}

#[test]
fn c07_loss_numerics() {
    let _g = serial();
    let mut r = rng(7);
    let mut worst_fl = 0f64;
    let mut worst_ce = 0f64;
    let (mut boundary, mut small) = (0, 0);
    for inst in 0..1000 {
        let t = 2 * r.random_range(0..8) + 1;
        let rays = r.random_range(1..30);
        let mut pred: Vec<f32> = (0..rays * t).map(|_| r.random_range(-0.1..0.1)).collect();
        let gt: Vec<f32> = (0..rays * t).map(|_| r.random_range(-0.1..0.1)).collect();
        // some all-zero rays exercise the zero-norm cosine rule
        if inst % 7 == 0 {
            pred[..t].fill(0.0);
        }
        let valid: Vec<bool> = (0..rays).map(|_| r.random_bool(0.7)).collect();
        let got = metrics::fusion_loss(&pred, &gt, t, &valid, metrics::DEFAULT_FUSION_LAMBDAS).unwrap();
        worst_fl = worst_fl.max((got - brute_fusion_loss(&pred, &gt, t, &valid)).abs() / got.abs().max(1.0));

        let th = 0.5;
        let k = r.random_range(1..40);
        let n = match inst % 3 {
            0 => r.random_range(0..k + 1),
            _ => r.random_range(k + 1..k + 80),
        };
        let mut losses: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.5)).collect();
        if inst % 3 == 1 && n > k {
            // make the K-th largest exactly the threshold
            losses.sort_by(|a, b| b.total_cmp(a));
            losses[k - 1] = th;
            for l in &mut losses[..k - 1] {
                *l = l.max(th + 1e-3);
            }
            losses.shuffle(&mut r);
            boundary += 1;
        }
        if n <= k {
            small += 1;
        }
        let got = metrics::bootstrapped_ce(&losses, k, th).unwrap();
        worst_ce = worst_ce.max((got - brute_bootstrap(&losses, k, th)).abs() / got.abs().max(1.0));
    }
    let ok = worst_fl <= 1e-9 && worst_ce <= 1e-9;
    verdict(
        "7",
        ok,
        &format!("1000 instances ({boundary} at H_K = H_th, {small} with K >= n): fusion {worst_fl:.2e}, bootstrap {worst_ce:.2e}"),
    );
}

// ---------------------------------------------------------------- 8

fn plane(z: f32, size: f32, n: usize) -> TriMesh {
    let mut mesh = TriMesh::default();
    let step = size / n as f32;
    for i in 0..=n {
        for j in 0..=n {
            mesh.vertices.push([i as f32 * step, j as f32 * step, z]);
            mesh.vertex_labels.push(1);
            mesh.vertex_scores.push(1.0);
        }
    }
    let id = |i: usize, j: usize| (i * (n + 1) + j) as u32;
    for i in 0..n {
        for j in 0..n {
            mesh.triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            mesh.triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    mesh
}

#[test]
fn c08_metric_oracles() {
    let _g = serial();
    let th = 0.01;
    let params = SamplingParams::default();
    let base = plane(0.0, 0.5, 10);
    let mut ok = true;
    let mut detail = Vec::new();
    for (offset, expect) in [(0.0, 100.0), (0.5 * th, 100.0), (1.5 * th, 0.0), (2.0 * th, 0.0)] {
        let other = plane(offset as f32, 0.5, 10);
        let rep = metrics::fscore(&other, &base, th, &params).unwrap();
        ok &= rep.precision == expect && rep.recall == expect && rep.f1 == expect;
        detail.push(format!("offset {:.1}th -> F {}", offset / th, rep.f1));
    }

    let mut r = rng(8);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let gt: Vec<u8> = (0..100).map(|_| r.random_range(0..=3)).collect();
        let pred: Vec<u8> = (0..100).map(|_| r.random_range(0..=3)).collect();
        let rep = metrics::iou_per_class(&pred, &gt, 3).unwrap();
        let mut present = Vec::new();
        for c in 1..=3u8 {
            let tp = (0..100).filter(|&i| gt[i] == c && pred[i] == c).count();
            let fp = (0..100).filter(|&i| gt[i] != 0 && gt[i] != c && pred[i] == c).count();
            let fn_ = (0..100).filter(|&i| gt[i] == c && pred[i] != c).count();
            for g in 0..=3u8 {
                let n = (0..100).filter(|&i| gt[i] == g && pred[i] == c).count() as u64;
                mismatches += usize::from(g != 0 && rep.confusion.get(g, c) != n);
            }
            if tp + fn_ > 0 {
                present.push((c, tp as f64 / (tp + fp + fn_) as f64));
            }
        }
        let got: Vec<(u8, f64)> = rep.per_class.iter().map(|c| (c.class_id, c.iou)).collect();
        let mean = present.iter().map(|p| p.1).sum::<f64>() / present.len() as f64;
        mismatches += usize::from(got != present) + usize::from(rep.mean_iou != mean);
    }
    ok &= mismatches == 0;
    detail.push(format!("IoU mismatches {mismatches} over 1000 instances"));
    verdict("8", ok, &detail.join("; "));
}

// ---------------------------------------------------------------- 9

fn measure_fps(resolution: u32) -> f64 {
    let sc = sphere_scenario(resolution, 100);
    let frames: Vec<_> = sc.poses.iter().map(|p| synth::render(&sc.scene, &sc.intrinsics, p).unwrap()).collect();
    let mut vol = VoxelVolume::new(sc.config.clone()).unwrap();
    let mut fuser = Fuser::new(FusionConfig::default()).unwrap();
    let predictor = ClassicPredictor::new(sc.config.truncation);
    let warmup = 3;
    let mut total = Duration::ZERO;
    for (i, ((depth, labels), pose)) in frames.iter().zip(&sc.poses).enumerate() {
        let t = Instant::now();
        fuser.fuse_frame(&mut vol, depth, Some(labels), &sc.intrinsics, pose, &predictor).unwrap();
        if i >= warmup {
            total += t.elapsed();
        }
    }
    (frames.len() - warmup) as f64 / total.as_secs_f64()
}

#[test]
fn c09_throughput() {
    let _g = serial();
    let fps128 = measure_fps(128);
    let fps256 = measure_fps(256);
    let threads = rayon::current_num_threads();
    verdict(
        "9",
        fps128 >= 30.0 && fps256 >= 8.0,
        &format!("{fps128:.1} FPS at 128x128, {fps256:.1} FPS at 256x256, {threads} worker thread(s)"),
    );
}

// ---------------------------------------------------------------- 10

fn grid_bits(vol: &VoxelVolume) -> (Vec<u32>, Vec<u32>, Vec<u8>, Vec<u32>) {
    let bits = |g: &semfuse::volume::ScalarGrid| g.to_vec().into_iter().map(f32::to_bits).collect::<Vec<_>>();
    (bits(vol.tsdf_grid()), bits(vol.weight_grid()), vol.label_grid().to_vec(), bits(vol.score_grid()))
}

#[test]
fn c10_format_round_trips() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(10);
    let mut failures = [0usize; 4];

    for i in 0..100 {
        let (w, h) = (r.random_range(1..40), r.random_range(1..30));
        let scale = if i % 2 == 0 { io::DEFAULT_DEPTH_SCALE } else { 5000.0 };
        let data: Vec<f32> = (0..w * h)
            .map(|_| if r.random_bool(0.1) { 0 } else { r.random_range(1..=u16::MAX) })
            .map(|raw| (f64::from(raw) / scale) as f32)
            .collect();
        let frame = DepthFrame::new(w, h, data).unwrap();
        let path = dir.path().join("d.png");
        io::write_depth(&path, &frame, scale).unwrap();
        let back = io::load_depth(&path, scale).unwrap();
        let same = back.width == w
            && back.height == h
            && back.data.iter().zip(&frame.data).all(|(a, b)| a.to_bits() == b.to_bits());
        failures[0] += usize::from(!same);
    }

    for i in 0..100 {
        let poses: Vec<Pose> = (0..r.random_range(1..20))
            .map(|_| {
                let q = UnitQuaternion::from_euler_angles(r.random_range(-3.1..3.1), r.random_range(-1.5..1.5), r.random_range(-3.1..3.1));
                let t = Vector3::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0));
                Pose::new(*q.to_rotation_matrix().matrix(), t).unwrap()
            })
            .collect();
        let path = dir.path().join("traj.txt");
        let conv = if i % 2 == 0 { io::PoseConvention::CamToWorld } else { io::PoseConvention::WorldToCam };
        io::save_trajectory(&path, &poses, conv).unwrap();
        let back = io::load_trajectory(&path, conv).unwrap();
        let same = back.len() == poses.len()
            && back.iter().zip(&poses).all(|(a, b)| match conv {
                // inverting twice is exact only up to rounding
                io::PoseConvention::WorldToCam => (a.to_matrix() - b.to_matrix()).amax() <= 1e-12,
                io::PoseConvention::CamToWorld => a == b,
            });
        failures[1] += usize::from(!same);
    }

    for _ in 0..100 {
        let n = r.random_range(3..200);
        let mut mesh = TriMesh::default();
        for _ in 0..n {
            mesh.vertices.push([r.random_range(-10.0..10.0), r.random_range(-10.0..10.0), r.random_range(-10.0..10.0)]);
            let l = r.random_range(0..=20);
            mesh.vertex_labels.push(l);
            mesh.vertex_scores.push(if l == 0 { 0.0 } else { r.random() });
        }
        for _ in 0..r.random_range(1..300) {
            let mut t = [0u32; 3];
            while t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                t = [0; 3].map(|_| r.random_range(0..n as u32));
            }
            mesh.triangles.push(t);
        }
        let path = dir.path().join("m.ply");
        io::write_mesh_ply(&mesh, &path).unwrap();
        failures[2] += usize::from(io::read_mesh_ply(&path).unwrap() != mesh);
    }

    for i in 0..100 {
        let precision = if i % 2 == 0 { StoragePrecision::Half } else { StoragePrecision::Single };
        let dims = [r.random_range(2..12), r.random_range(2..12), r.random_range(2..12)];
        let voxel = r.random_range(0.005..0.05);
        let vol = random_volume(&mut r, dims, voxel, precision);
        let path = dir.path().join("v.vxf");
        io::write_checkpoint(&vol, &path).unwrap();
        let back = io::read_checkpoint(&path).unwrap();
        let same = back.dims() == vol.dims()
            && back.config().precision == precision
            && back.config().voxel_size.to_bits() == vol.config().voxel_size.to_bits()
            && back.config().origin == vol.config().origin
            && back.config().truncation.to_bits() == vol.config().truncation.to_bits()
            && back.config().class_count == vol.config().class_count
            && grid_bits(&back) == grid_bits(&vol);
        failures[3] += usize::from(!same);
    }

    verdict(
        "10",
        failures == [0; 4],
        &format!(
            "failures out of 100: depth {}, trajectory {}, ply {}, checkpoint {}",
            failures[0], failures[1], failures[2], failures[3]
        ),
    );
}
