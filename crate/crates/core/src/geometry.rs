//! Pinhole camera model, rigid poses, and pixel/ray/world mappings.
//!
//! Conventions: poses are camera-to-world, the camera looks down its +z axis
//! with +x right and +y down, and depth is z-depth along the optical axis.

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Intrinsics for a square-pixel camera with the given horizontal field of
    /// view and the principal point at the image center.
    pub fn from_fov(width: u32, height: u32, hfov_deg: f64) -> Result<Self> {
        let fx = 0.5 * f64::from(width) / (0.5 * hfov_deg.to_radians()).tan();
        Self::new(
            fx,
            fx,
            0.5 * f64::from(width) - 0.5,
            0.5 * f64::from(height) - 0.5,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::Config(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be nonzero".into()));
        }
        if !(self.cx >= 0.0 && self.cx < f64::from(self.width))
            || !(self.cy >= 0.0 && self.cy < f64::from(self.height))
        {
            return Err(Error::Config(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < f64::from(self.width) && v < f64::from(self.height)
    }

    /// Camera-frame point at z = 1 on the viewing ray of `(u, v)`.
    #[inline]
    pub fn backproject_unit_z(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation, ROTATION_TOLERANCE).map_err(Error::Config)?;
        if translation.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("translation must be finite".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    /// Builds a pose from a rotation that is only approximately orthonormal,
    /// projecting it onto the nearest rotation first. Rotations that are
    /// already orthonormal to 1e-12 are kept bit for bit.
    pub fn from_approx_rotation(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        tolerance: f64,
    ) -> Result<Self> {
        check_rotation(&rotation, tolerance).map_err(Error::Config)?;
        if check_rotation(&rotation, 1e-12).is_ok() {
            return Self::new(rotation, translation);
        }
        Self::new(nearest_rotation(&rotation), translation)
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll (image -y
    /// points roughly along `up`).
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::Config("look_at: eye and target coincide".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::Config("look_at: up is parallel to the view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        Self::new(rotation, eye)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.tr_mul(&(p - self.translation))
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>, tolerance: f64) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("pose matrix has non-finite entries".into()));
        }
        let bottom = m.fixed_view::<1, 4>(3, 0);
        if (bottom - nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0)).norm() > tolerance {
            return Err(Error::Config(format!("pose matrix bottom row is {bottom}")));
        }
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
        let t: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into();
        Self::from_approx_rotation(r, t, tolerance)
    }

    /// Angle of the relative rotation between two poses, in radians.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        Rotation3::from_matrix_unchecked(rel).angle()
    }
}

fn check_rotation(r: &Matrix3<f64>, tolerance: f64) -> std::result::Result<(), String> {
    if r.iter().any(|x| !x.is_finite()) {
        return Err("rotation has non-finite entries".into());
    }
    let err = (r.transpose() * r - Matrix3::identity()).amax();
    if err > tolerance {
        return Err(format!("rotation is not orthonormal (max deviation {err:.3e})"));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > tolerance.max(3.0 * err) {
        return Err(format!("rotation determinant is {det}, expected +1"));
    }
    Ok(())
}

/// Nearest rotation in the Frobenius sense, via SVD.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub pixel: (u32, u32),
}

impl Ray {
    pub fn through_pixel(u: u32, v: u32, intrinsics: &Intrinsics, pose: &Pose) -> Result<Self> {
        let (uf, vf) = (f64::from(u), f64::from(v));
        if !intrinsics.contains(uf, vf) {
            return Err(out_of_bounds(uf, vf, intrinsics));
        }
        let dir_cam = intrinsics.backproject_unit_z(uf, vf).normalize();
        Ok(Self {
            origin: *pose.translation(),
            direction: pose.rotation() * dir_cam,
            pixel: (u, v),
        })
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

fn out_of_bounds(u: f64, v: f64, k: &Intrinsics) -> Error {
    Error::OutOfBounds { u, v, width: k.width, height: k.height }
}

/// World point seen at pixel `(u, v)` with z-depth `depth`.
pub fn unproject(
    pixel: (f64, f64),
    depth: f64,
    intrinsics: &Intrinsics,
    pose: &Pose,
) -> Result<Vector3<f64>> {
    let (u, v) = pixel;
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::InvalidSample(format!("depth must be positive, got {depth}")));
    }
    if !intrinsics.contains(u, v) {
        return Err(out_of_bounds(u, v, intrinsics));
    }
    Ok(pose.transform_point(&(intrinsics.backproject_unit_z(u, v) * depth)))
}

/// Projects a world point to `(u, v, z)`; `z` is the camera-frame depth.
/// The pixel may fall outside the image.
pub fn project(point: &Vector3<f64>, intrinsics: &Intrinsics, pose: &Pose) -> Result<(f64, f64, f64)> {
    let pc = pose.inverse_transform_point(point);
    if !(pc.z > 0.0) {
        return Err(Error::BehindCamera { z: pc.z });
    }
    Ok((
        intrinsics.fx * pc.x / pc.z + intrinsics.cx,
        intrinsics.fy * pc.y / pc.z + intrinsics.cy,
        pc.z,
    ))
}

/// `window` points along the viewing ray of `pixel`, one `spacing` apart,
/// centered on the surface point at `depth`. Index `(window - 1) / 2` is the
/// unprojected surface point itself; lower indices are closer to the camera.
pub fn ray_samples(
    pixel: (f64, f64),
    depth: f64,
    intrinsics: &Intrinsics,
    pose: &Pose,
    window: usize,
    spacing: f64,
) -> Result<Vec<Vector3<f64>>> {
    check_window(window)?;
    let center = unproject(pixel, depth, intrinsics, pose)?;
    let dir = pose.rotation() * intrinsics.backproject_unit_z(pixel.0, pixel.1).normalize();
    let half = (window / 2) as isize;
    Ok((0..window as isize)
        .map(|k| {
            let offset = k - half;
            if offset == 0 {
                center
            } else {
                center + dir * (offset as f64 * spacing)
            }
        })
        .collect())
}

pub(crate) fn check_window(window: usize) -> Result<()> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Config(format!("window size must be odd, got {window}")));
    }
    Ok(())
}

/// How a depth image encodes distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthKind {
    /// Distance along the optical axis.
    #[default]
    ZDepth,
    /// Euclidean distance from the camera center along the pixel ray.
    RayLength,
}

/// Metric depth image, row-major; 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthFrame {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::Shape(format!(
                "depth buffer has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0.0; width as usize * height as usize] }
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0.0).count()
    }

    pub fn check_matches(&self, intrinsics: &Intrinsics) -> Result<()> {
        if self.width != intrinsics.width || self.height != intrinsics.height {
            return Err(Error::Config(format!(
                "depth frame is {}x{} but intrinsics are {}x{}",
                self.width, self.height, intrinsics.width, intrinsics.height
            )));
        }
        Ok(())
    }

    /// Converts ray-length depth to z-depth in place; a no-op for z-depth input.
    pub fn to_z_depth(&mut self, kind: DepthKind, intrinsics: &Intrinsics) {
        if kind == DepthKind::ZDepth {
            return;
        }
        let w = self.width as usize;
        for (i, d) in self.data.iter_mut().enumerate() {
            if *d > 0.0 {
                let (u, v) = ((i % w) as f64, (i / w) as f64);
                *d = (f64::from(*d) / intrinsics.backproject_unit_z(u, v).norm()) as f32;
            }
        }
    }
}
