use std::path::Path;

use image::{DynamicImage, GrayImage};

use super::depth::open_image;
use crate::error::{Error, Result};
use crate::semantics::LabelFrame;

/// Raw label value meaning "unlabeled" on disk.
pub const UNLABELED_RAW: u8 = 255;

fn open_gray(path: &Path, what: &str) -> Result<GrayImage> {
    match open_image(path)? {
        DynamicImage::ImageLuma8(img) => Ok(img),
        _ => Err(Error::format(path, format!("expected an 8-bit single-channel {what} image"))),
    }
}

/// Loads an 8-bit label image and optional 8-bit score image.
///
/// Raw ids are shifted by +1 so that 0 means unlabeled; raw 255 maps to 0
/// with score 0. Scores are `raw / 255`, or 1.0 without a score image.
pub fn load_labels(path: &Path, score_path: Option<&Path>, class_count: u16) -> Result<LabelFrame> {
    let img = open_gray(path, "label")?;
    let (w, h) = img.dimensions();
    let raw = img.into_raw();
    let mut labels = Vec::with_capacity(raw.len());
    for &r in &raw {
        let l = if r == UNLABELED_RAW { 0 } else { u16::from(r) + 1 };
        if l > class_count {
            return Err(Error::format(path, format!("raw label {r} exceeds class count {class_count}")));
        }
        labels.push(l as u8);
    }
    let mut scores = match score_path {
        Some(sp) => {
            let s = open_gray(sp, "score")?;
            if s.dimensions() != (w, h) {
                return Err(Error::format(sp, format!("score image is {:?}, labels are {w}x{h}", s.dimensions())));
            }
            s.into_raw().into_iter().map(|r| f32::from(r) / 255.0).collect()
        }
        None => vec![1.0; labels.len()],
    };
    for (s, &l) in scores.iter_mut().zip(&labels) {
        if l == 0 {
            *s = 0.0;
        }
    }
    LabelFrame::new(w, h, labels, scores, class_count)
}

/// Writes labels (internal id − 1, unlabeled as 255) and optionally scores
/// quantized to `round(score * 255)`.
pub fn write_labels(path: &Path, score_path: Option<&Path>, frame: &LabelFrame) -> Result<()> {
    let raw: Vec<u8> = frame.labels.iter().map(|&l| if l == 0 { UNLABELED_RAW } else { l - 1 }).collect();
    save_gray(path, frame.width, frame.height, raw)?;
    if let Some(sp) = score_path {
        let raw = frame.scores.iter().map(|&s| (s.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        save_gray(sp, frame.width, frame.height, raw)?;
    }
    Ok(())
}

fn save_gray(path: &Path, w: u32, h: u32, raw: Vec<u8>) -> Result<()> {
    let img = GrayImage::from_raw(w, h, raw).expect("buffer matches frame size");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| Error::format(path, e.to_string()))?;
    super::write_bytes(path, out.get_ref())
}
