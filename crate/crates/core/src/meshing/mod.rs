//! Marching cubes over the TSDF zero crossing with label transfer.

mod tables;

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::volume::VoxelVolume;
use tables::{CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRIANGLE_TABLE};

/// Indexed triangle mesh with a class label and confidence per vertex.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f32; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub vertex_labels: Vec<u8>,
    pub vertex_scores: Vec<f32>,
}

impl TriMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Checks index ranges, attribute lengths, finiteness and that no
    /// triangle repeats a vertex.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.vertex_labels.len() != n || self.vertex_scores.len() != n {
            return Err(Error::Shape(format!(
                "{n} vertices but {} labels and {} scores",
                self.vertex_labels.len(),
                self.vertex_scores.len()
            )));
        }
        if self.vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Config("mesh has non-finite vertex coordinates".into()));
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v as usize >= n) {
                return Err(Error::Config(format!("triangle {i} references a missing vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::Config(format!("triangle {i} is degenerate")));
            }
        }
        Ok(())
    }

    pub fn vertex(&self, i: u32) -> Vector3<f64> {
        let [x, y, z] = self.vertices[i as usize];
        Vector3::new(f64::from(x), f64::from(y), f64::from(z))
    }

    pub fn triangle_points(&self, t: usize) -> [Vector3<f64>; 3] {
        self.triangles[t].map(|i| self.vertex(i))
    }

    /// Unnormalized normal (twice the area) of triangle `t`.
    pub fn triangle_normal(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle_points(t);
        (b - a).cross(&(c - a))
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| 0.5 * self.triangle_normal(t).norm()).sum()
    }

    /// Counts of undirected edges by how many triangles share them:
    /// `(boundary edges, manifold edges, edges shared by more than two)`.
    pub fn edge_sharing(&self) -> (usize, usize, usize) {
        let mut count: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out = (0, 0, 0);
        for &c in count.values() {
            match c {
                1 => out.0 += 1,
                2 => out.1 += 1,
                _ => out.2 += 1,
            }
        }
        out
    }
}

/// Extracts the zero level set of the TSDF.
///
/// Only cells whose 8 corners all have positive weight at or above
/// `weight_threshold` are polygonized. Vertices are shared between cells
/// along common edges, so closed observed surfaces come out watertight.
/// Each vertex takes the label and score of the edge endpoint with the
/// smaller |tsdf|. Triangles are wound with normals pointing toward positive
/// (outside) TSDF. Cells are visited in z-fastest order.
pub fn marching_cubes(volume: &VoxelVolume, weight_threshold: f32) -> TriMesh {
    let [dx, dy, dz] = volume.dims();
    let mut mesh = TriMesh::default();
    if dx < 2 || dy < 2 || dz < 2 {
        return mesh;
    }
    let mut edge_vertex: HashMap<u64, u32> = HashMap::new();
    let usable = |w: f32| w > 0.0 && w >= weight_threshold;

    for x in 0..dx - 1 {
        for y in 0..dy - 1 {
            for z in 0..dz - 1 {
                let mut idx = [0usize; 8];
                let mut val = [0f32; 8];
                let mut ok = true;
                for (c, off) in CORNER_OFFSETS.iter().enumerate() {
                    let i = volume.index(x + off[0], y + off[1], z + off[2]);
                    if !usable(volume.weight(i)) {
                        ok = false;
                        break;
                    }
                    idx[c] = i;
                    val[c] = volume.tsdf(i);
                }
                if !ok {
                    continue;
                }
                let case = val
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (c, &v)| if v < 0.0 { acc | (1 << c) } else { acc });
                let edges = EDGE_TABLE[case];
                if edges == 0 {
                    continue;
                }
                let mut cell_vertex = [u32::MAX; 12];
                for (e, &[a, b]) in EDGE_CORNERS.iter().enumerate() {
                    if edges & (1 << e) == 0 {
                        continue;
                    }
                    let (lo, axis) = edge_key(&CORNER_OFFSETS[a], &CORNER_OFFSETS[b]);
                    let lo_idx = volume.index(x + lo[0], y + lo[1], z + lo[2]);
                    let key = lo_idx as u64 * 3 + axis as u64;
                    cell_vertex[e] = *edge_vertex.entry(key).or_insert_with(|| {
                        let (va, vb) = (f64::from(val[a]), f64::from(val[b]));
                        let t = va / (va - vb);
                        let pa = corner_coord(x, y, z, &CORNER_OFFSETS[a]);
                        let pb = corner_coord(x, y, z, &CORNER_OFFSETS[b]);
                        let p = volume.voxel_to_world(&(pa + (pb - pa) * t));
                        let src = if val[b].abs() < val[a].abs() { idx[b] } else { idx[a] };
                        mesh.vertices.push([p.x as f32, p.y as f32, p.z as f32]);
                        mesh.vertex_labels.push(volume.label(src));
                        mesh.vertex_scores.push(volume.score(src));
                        (mesh.vertices.len() - 1) as u32
                    });
                }
                for tri in TRIANGLE_TABLE[case].chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let [a, b, c] = [tri[0], tri[1], tri[2]].map(|e| cell_vertex[e as usize]);
                    // the lookup table winds triangles toward the inside
                    mesh.triangles.push([a, c, b]);
                }
            }
        }
    }
    mesh
}

fn edge_key(a: &[usize; 3], b: &[usize; 3]) -> ([usize; 3], usize) {
    let axis = (0..3).find(|&i| a[i] != b[i]).unwrap();
    let lo = if a[axis] < b[axis] { *a } else { *b };
    (lo, axis)
}

fn corner_coord(x: usize, y: usize, z: usize, off: &[usize; 3]) -> Vector3<f64> {
    Vector3::new((x + off[0]) as f64, (y + off[1]) as f64, (z + off[2]) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeConfig;

    fn baked(dims: [usize; 3], voxel: f64, sdf: impl Fn(Vector3<f64>) -> f64) -> VoxelVolume {
        let cfg = VolumeConfig::new(dims, voxel, [0.0; 3], 4.0 * voxel).with_class_count(3);
        let vol = VoxelVolume::new(cfg.clone()).unwrap();
        let n = vol.len();
        let trunc = 4.0 * voxel;
        let tsdf: Vec<f32> = (0..n).map(|i| sdf(vol.voxel_center(i)).clamp(-trunc, trunc) as f32).collect();
        let label: Vec<u8> = tsdf.iter().map(|&t| if t.abs() < trunc as f32 { 2 } else { 0 }).collect();
        let score: Vec<f32> = label.iter().map(|&l| if l > 0 { 1.0 } else { 0.0 }).collect();
        VoxelVolume::from_grids(cfg, &tsdf, &vec![1.0; n], &label, &score).unwrap()
    }

    #[test]
    fn plane_vertices_on_plane_with_upward_normals() {
        let vol = baked([10, 10, 20], 0.1, |p| p.z - 1.0);
        let mesh = marching_cubes(&vol, 0.0);
        mesh.validate().unwrap();
        assert!(!mesh.is_empty());
        for v in &mesh.vertices {
            assert!((v[2] - 1.0).abs() <= 0.05);
        }
        for t in 0..mesh.triangles.len() {
            assert!(mesh.triangle_normal(t).z > 0.0);
        }
        assert!(mesh.vertex_labels.iter().all(|&l| l == 2));
    }

    #[test]
    fn sphere_is_closed_and_outward() {
        let c = Vector3::new(0.5, 0.5, 0.5);
        let vol = baked([21, 21, 21], 0.05, |p| (p - c).norm() - 0.3);
        let mesh = marching_cubes(&vol, 0.0);
        mesh.validate().unwrap();
        let (boundary, _, over) = mesh.edge_sharing();
        assert_eq!((boundary, over), (0, 0));
        // signed volume is positive for outward winding
        let signed: f64 = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, cc] = mesh.triangle_points(t);
                (a - c).dot(&(b - c).cross(&(cc - c))) / 6.0
            })
            .sum();
        let expected = 4.0 / 3.0 * std::f64::consts::PI * 0.3f64.powi(3);
        assert!((signed - expected).abs() / expected < 0.05, "{signed} vs {expected}");
    }

    #[test]
    fn threshold_above_max_weight_gives_empty_mesh() {
        let vol = baked([6, 6, 6], 0.1, |p| p.z - 0.25);
        assert!(marching_cubes(&vol, 1.5).is_empty());
        assert!(!marching_cubes(&vol, 1.0).is_empty());
    }

    #[test]
    fn vertices_lie_on_sign_changing_edges() {
        let c = Vector3::new(0.4, 0.45, 0.5);
        let vol = baked([18, 18, 18], 0.05, |p| (p - c).norm() - 0.27);
        let mesh = marching_cubes(&vol, 0.0);
        for v in &mesh.vertices {
            let coord = vol.world_to_voxel(&Vector3::new(f64::from(v[0]), f64::from(v[1]), f64::from(v[2])));
            // exactly one axis is off-lattice
            let off: Vec<usize> = (0..3).filter(|&a| (coord[a] - coord[a].round()).abs() > 1e-4).collect();
            assert!(off.len() <= 1);
            if let Some(&a) = off.first() {
                let mut lo = coord.map(|x| x.round() as usize);
                lo[a] = coord[a].floor() as usize;
                let mut hi = lo;
                hi[a] += 1;
                let ta = vol.tsdf(vol.index(lo[0], lo[1], lo[2]));
                let tb = vol.tsdf(vol.index(hi[0], hi[1], hi[2]));
                assert!((ta < 0.0) != (tb < 0.0));
            }
        }
    }
}
