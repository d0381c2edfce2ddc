use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::geometry::DepthFrame;

/// Raw units per meter (millimeter storage).
pub const DEFAULT_DEPTH_SCALE: f64 = 1000.0;

pub(crate) fn open_image(path: &Path) -> Result<DynamicImage> {
    let bytes = super::read_bytes(path)?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, format!("not a readable PNG: {e}")))
}

/// Loads a 16-bit single-channel depth PNG as meters (`raw / scale`).
/// Raw 0 stays 0 (invalid).
pub fn load_depth(path: &Path, scale: f64) -> Result<DepthFrame> {
    if !(scale > 0.0) {
        return Err(Error::Config(format!("depth scale must be positive, got {scale}")));
    }
    let DynamicImage::ImageLuma16(img) = open_image(path)? else {
        return Err(Error::format(path, "expected a 16-bit single-channel depth image"));
    };
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|r| (f64::from(r) / scale) as f32).collect();
    DepthFrame::new(w, h, data)
}

/// Writes depth as a 16-bit PNG with `raw = round(meters * scale)`.
/// Invalid pixels (non-positive or non-finite) are written as 0.
pub fn write_depth(path: &Path, frame: &DepthFrame, scale: f64) -> Result<()> {
    if !(scale > 0.0) {
        return Err(Error::Config(format!("depth scale must be positive, got {scale}")));
    }
    let mut raw = Vec::with_capacity(frame.data.len());
    for &d in &frame.data {
        let r = if d > 0.0 && d.is_finite() { (f64::from(d) * scale).round() } else { 0.0 };
        if r > f64::from(u16::MAX) {
            return Err(Error::format(path, format!("depth {d} m does not fit 16 bits at scale {scale}")));
        }
        raw.push(r as u16);
    }
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(frame.width, frame.height, raw).expect("buffer matches frame size");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| Error::format(path, e.to_string()))?;
    super::write_bytes(path, out.get_ref())
}
