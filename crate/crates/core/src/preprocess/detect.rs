use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;

use super::{BoundingBox, DetectorKind, ImageTensor, PreprocessConfig};
use crate::error::{Error, Result};

/// A pluggable face detector (e.g. a Haar-cascade binding).
pub trait FaceDetector: Send + Sync {
    fn detect(&self, image: &ImageTensor) -> Option<BoundingBox>;
}

impl<F> FaceDetector for F
where
    F: Fn(&ImageTensor) -> Option<BoundingBox> + Send + Sync,
{
    fn detect(&self, image: &ImageTensor) -> Option<BoundingBox> {
        self(image)
    }
}

/// Detector stages used by [`DetectorKind::CascadeFrontalThenProfile`].
#[derive(Default)]
pub struct FaceDetectors {
    pub frontal: Option<Box<dyn FaceDetector>>,
    pub profile: Option<Box<dyn FaceDetector>>,
}

impl std::fmt::Debug for FaceDetectors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FaceDetectors")
            .field("frontal", &self.frontal.is_some())
            .field("profile", &self.profile.is_some())
            .finish()
    }
}

#[derive(Debug, Default)]
pub struct DetectionStats {
    /// Frames where the frontal stage failed and the profile stage succeeded.
    pub profile_fallbacks: AtomicUsize,
    /// Frames where no stage produced a box and the centred heuristic was used.
    pub heuristic_fallbacks: AtomicUsize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DetectionCounts {
    pub profile_fallbacks: usize,
    pub heuristic_fallbacks: usize,
}

impl DetectionStats {
    pub fn snapshot(&self) -> DetectionCounts {
        DetectionCounts {
            profile_fallbacks: self.profile_fallbacks.load(Ordering::Relaxed),
            heuristic_fallbacks: self.heuristic_fallbacks.load(Ordering::Relaxed),
        }
    }
}

fn centered_box(image: &ImageTensor) -> BoundingBox {
    let side = ((0.8 * image.height.min(image.width) as f64).floor() as u32).max(1);
    BoundingBox {
        x: (image.width as u32 - side) / 2,
        y: (image.height as u32 - side) / 2,
        w: side,
        h: side,
    }
}

/// Locates the face in `image`.
///
/// Frames where no configured stage yields a usable box fall back to the
/// centred heuristic and are counted in `stats`; they are never dropped.
pub fn detect_face(
    image: &ImageTensor,
    config: &PreprocessConfig,
    metadata_box: Option<BoundingBox>,
    detectors: &FaceDetectors,
    stats: &DetectionStats,
) -> Result<BoundingBox> {
    if image.is_empty() {
        return Err(Error::InvalidInput("cannot detect a face in an empty image".into()));
    }
    let usable = |b: Option<BoundingBox>| b.filter(|b| b.fits(image.width, image.height));
    let found = match config.detector {
        DetectorKind::CenteredHeuristic => return Ok(centered_box(image)),
        DetectorKind::Metadata => usable(metadata_box),
        DetectorKind::CascadeFrontalThenProfile => {
            match usable(detectors.frontal.as_ref().and_then(|d| d.detect(image))) {
                Some(b) => Some(b),
                None => {
                    let profile = usable(detectors.profile.as_ref().and_then(|d| d.detect(image)));
                    if profile.is_some() {
                        stats.profile_fallbacks.fetch_add(1, Ordering::Relaxed);
                    }
                    profile
                }
            }
        }
    };
    Ok(found.unwrap_or_else(|| {
        stats.heuristic_fallbacks.fetch_add(1, Ordering::Relaxed);
        centered_box(image)
    }))
}
