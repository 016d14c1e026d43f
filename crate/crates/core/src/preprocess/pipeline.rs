use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::detect::DetectionCounts;
use super::{
    augment, crop_resize, detect_face, normalize, DetectionStats, FaceDetectors, ImageTensor,
    PreprocessConfig,
};
use crate::dataset::FrameRecord;
use crate::error::{Error, Result};
use crate::seed::{frame_seed, rng_from};

/// Loads, localises and crops frames according to a [`PreprocessConfig`].
#[derive(Debug, Default)]
pub struct Preprocessor {
    pub config: PreprocessConfig,
    pub detectors: FaceDetectors,
    stats: DetectionStats,
}

impl Preprocessor {
    pub fn new(config: PreprocessConfig) -> Result<Self> {
        config.validate()?;
        Ok(Preprocessor {
            config,
            detectors: FaceDetectors::default(),
            stats: DetectionStats::default(),
        })
    }

    pub fn with_detectors(mut self, detectors: FaceDetectors) -> Self {
        self.detectors = detectors;
        self
    }

    pub fn detection_counts(&self) -> DetectionCounts {
        self.stats.snapshot()
    }

    /// Face crop of one frame at `target_size`, values in `[0, 1]`.
    pub fn crop_frame(&self, record: &FrameRecord) -> Result<ImageTensor> {
        let image = ImageTensor::load_png(&record.image_path)?;
        self.crop_image(&image, record)
    }

    pub fn crop_image(&self, image: &ImageTensor, record: &FrameRecord) -> Result<ImageTensor> {
        let bbox = detect_face(
            image,
            &self.config,
            record.face_box,
            &self.detectors,
            &self.stats,
        )?;
        crop_resize(image, bbox, self.config.target_size)
    }
}

type FrameKey = (String, String, u64);

fn key_of(r: &FrameRecord) -> FrameKey {
    (r.subject_id.clone(), r.sequence_id.clone(), r.frame_index)
}

/// Face crops for a set of frames, computed once and shared across epochs
/// and folds. Augmentation and normalisation are applied per request.
#[derive(Debug, Clone)]
pub struct FrameCache {
    config: PreprocessConfig,
    crops: Arc<HashMap<FrameKey, ImageTensor>>,
}

impl FrameCache {
    pub fn build(pre: &Preprocessor, records: &[FrameRecord]) -> Result<Self> {
        let crops = records
            .par_iter()
            .map(|r| Ok((key_of(r), pre.crop_frame(r)?)))
            .collect::<Result<HashMap<_, _>>>()?;
        Ok(FrameCache {
            config: pre.config.clone(),
            crops: Arc::new(crops),
        })
    }

    pub fn config(&self) -> &PreprocessConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.crops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crops.is_empty()
    }

    pub fn crop(&self, record: &FrameRecord) -> Result<&ImageTensor> {
        self.crops.get(&key_of(record)).ok_or_else(|| {
            Error::InvalidInput(format!(
                "frame {}/{}/{} is not in the preprocessing cache",
                record.subject_id, record.sequence_id, record.frame_index
            ))
        })
    }

    /// Normalised network input. With `augment_seed` set, the frame is
    /// randomly flipped using a stream derived from that seed and the frame's
    /// identity, so the result does not depend on processing order.
    pub fn input(&self, record: &FrameRecord, augment_seed: Option<u64>) -> Result<ImageTensor> {
        let crop = self.crop(record)?;
        match augment_seed {
            Some(seed) => {
                let mut rng = rng_from(frame_seed(
                    seed,
                    &record.subject_id,
                    &record.sequence_id,
                    record.frame_index,
                ));
                normalize(&augment(crop, &self.config, &mut rng), &self.config)
            }
            None => normalize(crop, &self.config),
        }
    }
}
