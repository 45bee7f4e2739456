//! PNG load/save for the in-memory image types.

use crate::imagecore::{ColorImage, GrayImage};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PngError {
    #[error("png error for {path}: {reason}")]
    Codec { path: String, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn save_gray_png(img: &GrayImage, path: &Path) -> Result<(), PngError> {
    let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, img.data.clone())
        .expect("buffer length matches dimensions by construction");
    buf.save(path).map_err(|e| PngError::Codec {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn load_gray_png(path: &Path) -> Result<GrayImage, PngError> {
    let img = image::open(path)
        .map_err(|e| PngError::Codec { path: path.display().to_string(), reason: e.to_string() })?
        .into_luma8();
    Ok(GrayImage {
        width: img.width() as usize,
        height: img.height() as usize,
        data: img.into_raw(),
    })
}

pub fn load_color_png(path: &Path) -> Result<ColorImage, PngError> {
    let img = image::open(path)
        .map_err(|e| PngError::Codec { path: path.display().to_string(), reason: e.to_string() })?
        .into_rgb8();
    Ok(ColorImage {
        width: img.width() as usize,
        height: img.height() as usize,
        data: img.into_raw(),
    })
}
