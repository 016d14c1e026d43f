//! Frame preprocessing: face localisation, crop and resize, horizontal-flip
//! augmentation and per-channel normalisation.

mod detect;
mod image_tensor;
mod pipeline;
mod transform;

use serde::{Deserialize, Serialize};

pub use detect::{detect_face, DetectionStats, FaceDetector, FaceDetectors};
pub use image_tensor::ImageTensor;
pub use pipeline::{FrameCache, Preprocessor};
pub use transform::{augment, crop_resize, denormalize, hflip, normalize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w > 0
            && self.h > 0
            && (self.x as usize + self.w as usize) <= width
            && (self.y as usize + self.h as usize) <= height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Use the face box stored alongside the frame.
    Metadata,
    /// Frontal detector first, profile detector only when frontal finds nothing.
    CascadeFrontalThenProfile,
    /// Centred square with side `0.8 * min(h, w)`.
    CenteredHeuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Square network input side. Defaults to 224, the usual input of
    /// ImageNet-style backbones; some write-ups print 244, which is not a
    /// standard size for these networks.
    pub target_size: usize,
    pub channel_mean: [f64; 3],
    pub channel_std: [f64; 3],
    pub hflip_probability: f64,
    pub detector: DetectorKind,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_size: 224,
            channel_mean: [0.5; 3],
            channel_std: [0.5; 3],
            hflip_probability: 0.5,
            detector: DetectorKind::Metadata,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 {
            return Err(Error::config("preprocess.target_size", "must be positive"));
        }
        if let Some(s) = self.channel_std.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::config(
                "preprocess.channel_std",
                format!("every component must be > 0, got {s}"),
            ));
        }
        if self.channel_mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::config("preprocess.channel_mean", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.hflip_probability) {
            return Err(Error::config(
                "preprocess.hflip_probability",
                format!("must lie in [0, 1], got {}", self.hflip_probability),
            ));
        }
        Ok(())
    }
}
