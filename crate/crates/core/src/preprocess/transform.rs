use rand::Rng;

use super::{BoundingBox, ImageTensor, PreprocessConfig};
use crate::error::{Error, Result};

/// Crops `bbox` and resamples it to `target_size x target_size` with bilinear
/// interpolation (pixel-centre aligned, edges clamped to the box). The box is
/// stretched to a square; aspect ratio is not preserved.
pub fn crop_resize(
    image: &ImageTensor,
    bbox: BoundingBox,
    target_size: usize,
) -> Result<ImageTensor> {
    if bbox.w == 0 || bbox.h == 0 || target_size == 0 {
        return Err(Error::InvalidInput(format!(
            "degenerate crop {bbox:?} -> {target_size}"
        )));
    }
    if !bbox.fits(image.width, image.height) {
        return Err(Error::InvalidInput(format!(
            "box {bbox:?} exceeds {}x{} image",
            image.width, image.height
        )));
    }
    let axis = |origin: u32, extent: u32| -> Vec<(usize, usize, f64)> {
        let scale = f64::from(extent) / target_size as f64;
        let lo = f64::from(origin);
        let hi = f64::from(origin + extent - 1);
        (0..target_size)
            .map(|i| {
                let s = (lo + (i as f64 + 0.5) * scale - 0.5).clamp(lo, hi);
                let s0 = s.floor();
                let i0 = s0 as usize;
                let i1 = (i0 + 1).min(hi as usize);
                (i0, i1, s - s0)
            })
            .collect()
    };
    let rows = axis(bbox.y, bbox.h);
    let cols = axis(bbox.x, bbox.w);
    let mut out = ImageTensor::filled(target_size, target_size, 0.0);
    for c in 0..ImageTensor::CHANNELS {
        for (oy, &(y0, y1, fy)) in rows.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in cols.iter().enumerate() {
                let top = image.at(c, y0, x0) * (1.0 - fx) + image.at(c, y0, x1) * fx;
                let bottom = image.at(c, y1, x0) * (1.0 - fx) + image.at(c, y1, x1) * fx;
                *out.at_mut(c, oy, ox) = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Ok(out)
}

/// Mirrors columns: column `j` moves to `width - 1 - j`.
pub fn hflip(image: &ImageTensor) -> ImageTensor {
    let mut out = image.clone();
    let w = image.width;
    for row in out.data.chunks_exact_mut(w) {
        row.reverse();
    }
    out
}

/// Random horizontal flip with probability `config.hflip_probability`.
/// Callers apply this in training only.
pub fn augment<R: Rng + ?Sized>(
    image: &ImageTensor,
    config: &PreprocessConfig,
    rng: &mut R,
) -> ImageTensor {
    if rng.random::<f64>() < config.hflip_probability {
        hflip(image)
    } else {
        image.clone()
    }
}

/// `(x - mean[c]) / std[c]` per channel.
pub fn normalize(image: &ImageTensor, config: &PreprocessConfig) -> Result<ImageTensor> {
    if let Some(s) = config.channel_std.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::config(
            "preprocess.channel_std",
            format!("every component must be > 0, got {s}"),
        ));
    }
    let mut out = image.clone();
    let plane = image.height * image.width;
    for (c, chunk) in out.data.chunks_exact_mut(plane).enumerate() {
        let (m, s) = (config.channel_mean[c], config.channel_std[c]);
        for v in chunk {
            *v = (*v - m) / s;
        }
    }
    Ok(out)
}

/// Inverse of [`normalize`].
pub fn denormalize(image: &ImageTensor, config: &PreprocessConfig) -> ImageTensor {
    let mut out = image.clone();
    let plane = image.height * image.width;
    for (c, chunk) in out.data.chunks_exact_mut(plane).enumerate() {
        let (m, s) = (config.channel_mean[c], config.channel_std[c]);
        for v in chunk {
            *v = *v * s + m;
        }
    }
    out
}
