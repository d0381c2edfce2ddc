//! Volume checkpoints.
//!
//! Little-endian layout: magic `VXF1`; dims as 3 x u32; voxel size f64;
//! origin 3 x f64; truncation f64; precision u8 (0 half, 1 single); class
//! count u16; then the tsdf, weight, label (u8) and score grids in z-fastest
//! order. Scalar grids use 2 bytes per value at half precision, 4 at single.

use std::path::Path;

use half::f16;

use crate::error::{Error, Result};
use crate::volume::{ScalarGrid, StoragePrecision, VolumeConfig, VoxelVolume};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VXF1";
const HEADER_LEN: usize = 4 + 12 + 8 + 24 + 8 + 1 + 2;

pub fn write_checkpoint(volume: &VoxelVolume, path: &Path) -> Result<()> {
    let cfg = volume.config();
    let n = volume.len();
    let scalar = cfg.precision.scalar_bytes() as usize;
    let mut buf = Vec::with_capacity(HEADER_LEN + n * (3 * scalar + 1));
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for d in cfg.dims {
        let d = u32::try_from(d).map_err(|_| Error::format(path, format!("dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&cfg.voxel_size.to_le_bytes());
    for o in cfg.origin {
        buf.extend_from_slice(&o.to_le_bytes());
    }
    buf.extend_from_slice(&cfg.truncation.to_le_bytes());
    buf.push(match cfg.precision {
        StoragePrecision::Half => 0,
        StoragePrecision::Single => 1,
    });
    buf.extend_from_slice(&cfg.class_count.to_le_bytes());
    put_grid(&mut buf, volume.tsdf_grid());
    put_grid(&mut buf, volume.weight_grid());
    buf.extend_from_slice(volume.label_grid());
    put_grid(&mut buf, volume.score_grid());
    super::write_bytes(path, &buf)
}

fn put_grid(buf: &mut Vec<u8>, grid: &ScalarGrid) {
    match grid {
        ScalarGrid::Half(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_bits().to_le_bytes())),
        ScalarGrid::Single(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_bits().to_le_bytes())),
    }
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(self.path, format!("truncated checkpoint: need {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn grid(&mut self, precision: StoragePrecision, n: usize) -> Result<ScalarGrid> {
        let bytes = self.take(n * precision.scalar_bytes() as usize)?;
        Ok(match precision {
            StoragePrecision::Half => ScalarGrid::Half(
                bytes.chunks_exact(2).map(|c| f16::from_bits(u16::from_le_bytes([c[0], c[1]]))).collect(),
            ),
            StoragePrecision::Single => ScalarGrid::Single(
                bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
            ),
        })
    }
}

pub fn read_checkpoint(path: &Path) -> Result<VoxelVolume> {
    let bytes = super::read_bytes(path)?;
    let mut r = Reader { path, bytes: &bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "not a volume checkpoint (bad magic)"));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = u32::from_le_bytes(r.array()?) as usize;
    }
    let voxel_size = r.f64()?;
    let origin = [r.f64()?, r.f64()?, r.f64()?];
    let truncation = r.f64()?;
    let precision = match r.take(1)?[0] {
        0 => StoragePrecision::Half,
        1 => StoragePrecision::Single,
        p => return Err(Error::format(path, format!("unknown precision flag {p}"))),
    };
    let class_count = u16::from_le_bytes(r.array()?);
    let config = VolumeConfig::new(dims, voxel_size, origin, truncation)
        .with_precision(precision)
        .with_class_count(class_count);
    config.validate().map_err(|e| Error::format(path, e.to_string()))?;
    let n = dims.iter().product::<usize>();
    let expected = HEADER_LEN + n * (3 * precision.scalar_bytes() as usize + 1);
    if bytes.len() != expected {
        return Err(Error::format(path, format!("checkpoint is {} bytes, header implies {expected}", bytes.len())));
    }
    let tsdf = r.grid(precision, n)?;
    let weight = r.grid(precision, n)?;
    let label = r.take(n)?.to_vec();
    let score = r.grid(precision, n)?;
    let vol = VoxelVolume::from_raw(config, tsdf, weight, label, score);
    vol.check_invariants().map_err(|e| Error::format(path, e))?;
    Ok(vol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.vxf");
        std::fs::write(&p, b"VXF0aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa").unwrap();
        assert!(matches!(read_checkpoint(&p), Err(Error::Format { .. })));
        let vol = VoxelVolume::new(VolumeConfig::new([2, 3, 4], 0.1, [0.0; 3], 0.3)).unwrap();
        write_checkpoint(&vol, &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.pop();
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_checkpoint(&p), Err(Error::Format { .. })));
    }
}
