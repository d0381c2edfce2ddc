use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Tolerance for accepting a stored rotation before re-orthonormalizing.
pub const ROTATION_TOLERANCE: f64 = 1e-4;

/// Which transform a trajectory file stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseConvention {
    #[default]
    CamToWorld,
    WorldToCam,
}

/// Loads one pose per non-empty line. A line holds a row-major 4x4 matrix
/// (16 numbers), `tx ty tz qx qy qz qw` (7), or a timestamp followed by
/// those 7. Lines starting with `#` are comments. Poses are returned
/// camera-to-world.
pub fn load_trajectory(path: &Path, convention: PoseConvention) -> Result<Vec<Pose>> {
    let text = super::read_text(path)?;
    parse_trajectory(&text, convention).map_err(|e| match e {
        Error::Pose { index, msg } => Error::format(path, format!("pose {index}: {msg}")),
        other => other,
    })
}

pub fn parse_trajectory(text: &str, convention: PoseConvention) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let index = poses.len();
        let err = |msg: String| Error::Pose { index, msg };
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("'{t}' is not a number"))))
            .collect::<Result<_>>()?;
        if nums.iter().any(|x| !x.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        let pose = match nums.len() {
            16 => {
                let m = Matrix4::from_row_slice(&nums);
                Pose::from_matrix(&m, ROTATION_TOLERANCE)
            }
            7 | 8 => {
                let v = &nums[nums.len() - 7..];
                let q = Quaternion::new(v[6], v[3], v[4], v[5]);
                if (q.norm() - 1.0).abs() > ROTATION_TOLERANCE {
                    return Err(err(format!("quaternion norm {} is not 1", q.norm())));
                }
                let r = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
                Pose::from_approx_rotation(r, Vector3::new(v[0], v[1], v[2]), ROTATION_TOLERANCE)
            }
            n => return Err(err(format!("expected 16, 7 or 8 numbers, found {n}"))),
        }
        .map_err(|e| err(e.to_string()))?;
        poses.push(match convention {
            PoseConvention::CamToWorld => pose,
            PoseConvention::WorldToCam => pose.inverse(),
        });
    }
    Ok(poses)
}

/// Writes each pose as a row-major 4x4 matrix in the given convention,
/// with shortest round-trip float formatting.
pub fn save_trajectory(path: &Path, poses: &[Pose], convention: PoseConvention) -> Result<()> {
    let mut out = String::new();
    for pose in poses {
        let p = match convention {
            PoseConvention::CamToWorld => *pose,
            PoseConvention::WorldToCam => pose.inverse(),
        };
        let m = p.to_matrix();
        let row: Vec<String> = (0..4).flat_map(|r| (0..4).map(move |c| (r, c))).map(|(r, c)| m[(r, c)].to_string()).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    super::write_bytes(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_conventions() {
        let id = "1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1\n";
        assert_eq!(parse_trajectory(id, PoseConvention::CamToWorld).unwrap(), vec![Pose::identity()]);
        let shifted = "1 0 0 1 0 1 0 2 0 0 1 3 0 0 0 1";
        let p = parse_trajectory(shifted, PoseConvention::WorldToCam).unwrap()[0];
        assert_eq!(*p.translation(), Vector3::new(-1.0, -2.0, -3.0));
        let tum = "# t tx ty tz qx qy qz qw\n0.5 1 2 3 0 0 0 1\n1 2 3 0 0 0 1";
        let poses = parse_trajectory(tum, PoseConvention::CamToWorld).unwrap();
        assert_eq!(poses.len(), 2);
        assert_eq!(poses[0], poses[1]);
    }

    #[test]
    fn bad_lines_name_the_frame() {
        let text = "1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1\n1 0 0 0 0 1 0 0 0 0 0 0 0 0 0 1\n";
        let err = parse_trajectory(text, PoseConvention::CamToWorld).unwrap_err();
        assert!(matches!(err, Error::Pose { index: 1, .. }), "{err}");
        assert!(parse_trajectory("1 2 3", PoseConvention::CamToWorld).is_err());
        assert!(parse_trajectory("0 0 0 0 0 0 NaN", PoseConvention::CamToWorld).is_err());
    }
}
