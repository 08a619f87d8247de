use image::RgbImage;
use thiserror::Error;

use crate::neural::Matrix;

pub const IMAGE_SIDE: usize = 224;
pub const PATCH_SIDE: usize = 16;
pub const PATCHES_PER_SIDE: usize = IMAGE_SIDE / PATCH_SIDE;
pub const PATCH_COUNT: usize = PATCHES_PER_SIDE * PATCHES_PER_SIDE;
pub const PATCH_DIM: usize = PATCH_SIDE * PATCH_SIDE * 3;

#[derive(Debug, Error)]
pub enum PatchError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("image {width}x{height} is smaller than one {PATCH_SIDE}x{PATCH_SIDE} patch")]
    Degenerate { width: u32, height: u32 },
}

/// `P x D` raw patch values in `[0, 1]`, row-major over the patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePatchGrid {
    pub patches: Matrix,
    pub source_id: String,
}

pub fn decode_image(bytes: &[u8]) -> Result<RgbImage, PatchError> {
    image::load_from_memory(bytes)
        .map(|img| img.to_rgb8())
        .map_err(|e| PatchError::Decode(e.to_string()))
}

/// Bilinear resample of one channel at output pixel `(x, y)` using
/// half-pixel centers and edge clamping.
fn sample(img: &RgbImage, sx: f64, sy: f64, ch: usize) -> f64 {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0f = sx.floor();
    let y0f = sy.floor();
    let fx = sx - x0f;
    let fy = sy - y0f;
    let clamp = |v: i64, hi: i64| v.clamp(0, hi - 1) as u32;
    let (x0, y0) = (x0f as i64, y0f as i64);
    let px = |x: i64, y: i64| img.get_pixel(clamp(x, w), clamp(y, h))[ch] as f64;
    let top = px(x0, y0) * (1.0 - fx) + px(x0 + 1, y0) * fx;
    let bottom = px(x0, y0 + 1) * (1.0 - fx) + px(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Resizes to 224x224 (bilinear, skipped when already that size), cuts
/// non-overlapping 16x16 patches row-major and flattens each patch with
/// interleaved RGB channels, scaled by 1/255.
pub fn patchify(img: &RgbImage, source_id: &str) -> Result<ImagePatchGrid, PatchError> {
    let (w, h) = img.dimensions();
    if (w as usize) < PATCH_SIDE || (h as usize) < PATCH_SIDE {
        return Err(PatchError::Degenerate { width: w, height: h });
    }
    let native = w as usize == IMAGE_SIDE && h as usize == IMAGE_SIDE;
    let sx = w as f64 / IMAGE_SIDE as f64;
    let sy = h as f64 / IMAGE_SIDE as f64;
    let value = |x: usize, y: usize, ch: usize| -> f64 {
        if native {
            img.get_pixel(x as u32, y as u32)[ch] as f64
        } else {
            sample(img, (x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5, ch)
        }
    };
    let mut data = Vec::with_capacity(PATCH_COUNT * PATCH_DIM);
    for py in 0..PATCHES_PER_SIDE {
        for px in 0..PATCHES_PER_SIDE {
            for dy in 0..PATCH_SIDE {
                for dx in 0..PATCH_SIDE {
                    let (x, y) = (px * PATCH_SIDE + dx, py * PATCH_SIDE + dy);
                    for ch in 0..3 {
                        data.push(value(x, y, ch) / 255.0);
                    }
                }
            }
        }
    }
    Ok(ImagePatchGrid {
        patches: Matrix::new(PATCH_COUNT, PATCH_DIM, data).expect("patch values are finite"),
        source_id: source_id.to_string(),
    })
}

pub fn patchify_bytes(bytes: &[u8], source_id: &str) -> Result<ImagePatchGrid, PatchError> {
    patchify(&decode_image(bytes)?, source_id)
}
