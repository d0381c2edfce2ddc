//! Binary little-endian PLY with per-vertex color, label and score.

use std::path::Path;

use crate::error::{Error, Result};
use crate::meshing::TriMesh;

/// Display color of a class id (the PASCAL VOC bit-interleaved palette;
/// id 0 is black).
pub fn class_color(label: u8) -> [u8; 3] {
    let mut c = [0u8; 3];
    let mut id = label;
    for shift in (0..8).rev() {
        for (ch, out) in c.iter_mut().enumerate() {
            *out |= ((id >> ch) & 1) << shift;
        }
        id >>= 3;
    }
    c
}

pub fn write_mesh_ply(mesh: &TriMesh, path: &Path) -> Result<()> {
    mesh.validate().map_err(|e| Error::format(path, e.to_string()))?;
    let header = format!(
        "ply\nformat binary_little_endian 1.0\ncomment semfuse labeled mesh\n\
         element vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         property uchar label\nproperty float score\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    let mut buf = Vec::with_capacity(header.len() + mesh.vertices.len() * 20 + mesh.triangles.len() * 13);
    buf.extend_from_slice(header.as_bytes());
    for ((v, &l), &s) in mesh.vertices.iter().zip(&mesh.vertex_labels).zip(&mesh.vertex_scores) {
        for c in v {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        buf.extend_from_slice(&class_color(l));
        buf.push(l);
        buf.extend_from_slice(&s.to_le_bytes());
    }
    for t in &mesh.triangles {
        buf.push(3);
        for &i in t {
            buf.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    super::write_bytes(path, &buf)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => f64::from(b[0] as i8),
            Self::U8 => f64::from(b[0]),
            Self::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Self::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Self::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

fn parse_header(path: &Path, text: &str) -> Result<Vec<Element>> {
    let bad = |msg: String| Error::format(path, msg);
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing 'ply' magic".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "binary_little_endian", _] => {}
            ["format", f, ..] => return Err(bad(format!("unsupported PLY format '{f}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad(format!("bad element count '{count}'")))?,
                props: Vec::new(),
            }),
            ["property", "list", c, i, name] => {
                let (Some(count), Some(item)) = (Scalar::parse(c), Scalar::parse(i)) else {
                    return Err(bad(format!("unknown list types '{c} {i}'")));
                };
                let el = elements.last_mut().ok_or_else(|| bad("property before element".into()))?;
                el.props.push(Property::List { name: name.to_string(), count, item });
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| bad(format!("unknown property type '{ty}'")))?;
                let el = elements.last_mut().ok_or_else(|| bad("property before element".into()))?;
                el.props.push(Property::Scalar { name: name.to_string(), ty });
            }
            _ => return Err(bad(format!("unrecognized header line '{line}'"))),
        }
    }
    Ok(elements)
}

/// Reads a binary little-endian PLY. Requires vertex `x, y, z` and a face
/// index list; `label` and `score` vertex properties are optional (missing
/// labels read as 0; missing scores as 1 for labeled vertices). Polygons are
/// fan-triangulated.
pub fn read_mesh_ply(path: &Path) -> Result<TriMesh> {
    let bytes = super::read_bytes(path)?;
    let bad = |msg: String| Error::format(path, msg);
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| bad("missing end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8".into()))?;
    let elements = parse_header(path, header)?;
    let mut pos = end + END.len();
    let mut take = |n: usize| -> Result<&[u8]> {
        if pos + n > bytes.len() {
            return Err(Error::format(path, "unexpected end of data"));
        }
        pos += n;
        Ok(&bytes[pos - n..pos])
    };

    let mut mesh = TriMesh::default();
    let mut has_score = false;
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let find = |n: &str| el.props.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == n));
                let (Some(ix), Some(iy), Some(iz)) = (find("x"), find("y"), find("z")) else {
                    return Err(bad("vertex element lacks x, y, z".into()));
                };
                let (il, is) = (find("label"), find("score"));
                has_score = is.is_some();
                let mut vals = vec![0f64; el.props.len()];
                for _ in 0..el.count {
                    for (k, p) in el.props.iter().enumerate() {
                        match p {
                            Property::Scalar { ty, .. } => vals[k] = ty.read(take(ty.size())?),
                            Property::List { .. } => return Err(bad("list properties on vertices are not supported".into())),
                        }
                    }
                    mesh.vertices.push([vals[ix] as f32, vals[iy] as f32, vals[iz] as f32]);
                    let l = il.map_or(0.0, |i| vals[i]);
                    if !(0.0..=255.0).contains(&l) || l.fract() != 0.0 {
                        return Err(bad(format!("vertex label {l} is not an 8-bit id")));
                    }
                    mesh.vertex_labels.push(l as u8);
                    mesh.vertex_scores.push(is.map_or(0.0, |i| vals[i] as f32));
                }
            }
            "face" => {
                for _ in 0..el.count {
                    for p in &el.props {
                        match p {
                            Property::Scalar { ty, .. } => {
                                take(ty.size())?;
                            }
                            Property::List { name, count, item } => {
                                let n = count.read(take(count.size())?) as usize;
                                let mut idx = Vec::with_capacity(n);
                                for _ in 0..n {
                                    let i = item.read(take(item.size())?);
                                    if i < 0.0 || i.fract() != 0.0 {
                                        return Err(bad(format!("invalid vertex index {i}")));
                                    }
                                    idx.push(i as u32);
                                }
                                if name == "vertex_indices" || name == "vertex_index" {
                                    for k in 1..n.saturating_sub(1) {
                                        mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    for p in &el.props {
                        match p {
                            Property::Scalar { ty, .. } => {
                                take(ty.size())?;
                            }
                            Property::List { count, item, .. } => {
                                let n = count.read(take(count.size())?) as usize;
                                take(n * item.size())?;
                            }
                        }
                    }
                }
            }
        }
    }
    if !has_score {
        for (s, &l) in mesh.vertex_scores.iter_mut().zip(&mesh.vertex_labels) {
            *s = if l > 0 { 1.0 } else { 0.0 };
        }
    }
    mesh.validate().map_err(|e| bad(e.to_string()))?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_is_fixed() {
        assert_eq!(class_color(0), [0, 0, 0]);
        assert_eq!(class_color(1), [128, 0, 0]);
        assert_eq!(class_color(2), [0, 128, 0]);
        assert_eq!(class_color(3), [128, 128, 0]);
        assert_eq!(class_color(15), [192, 128, 128]);
        assert_eq!(class_color(20), [0, 64, 128]);
    }

    #[test]
    fn empty_mesh_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.ply");
        write_mesh_ply(&TriMesh::default(), &p).unwrap();
        let text = std::fs::read(&p).unwrap();
        assert!(String::from_utf8_lossy(&text).contains("element vertex 0"));
        assert_eq!(read_mesh_ply(&p).unwrap(), TriMesh::default());
    }

    #[test]
    fn rejects_ascii_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ply");
        std::fs::write(&p, "ply\nformat ascii 1.0\nelement vertex 0\nend_header\n").unwrap();
        assert!(matches!(read_mesh_ply(&p), Err(Error::Format { .. })));
        std::fs::write(&p, "hello").unwrap();
        assert!(matches!(read_mesh_ply(&p), Err(Error::Format { .. })));
    }
}
