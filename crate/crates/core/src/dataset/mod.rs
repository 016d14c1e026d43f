//! Frame-annotated datasets: ingestion, class balance, fold planning and the
//! procedural face generator used for desk-scale runs.
//!
//! On-disk layout (shared by real UNBC-style data and the generator):
//!
//! ```text
//! <root>/Images/<subject>/<sequence>/<frame>.png
//! <root>/Frame_Labels/FACS/<subject>/<sequence>/<frame>_facs.txt
//! <root>/Face_Boxes/<subject>/<sequence>/<frame>_box.txt      (optional)
//! ```

mod balance;
mod folds;
mod ingest;
pub mod synthetic;

use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use balance::{
    class_counts, class_histogram, compute_class_weights, resample, ClassWeightTable,
    ResampleStrategy,
};
pub use folds::{make_fold_plan, Fold, FoldPlan};
pub use ingest::{ingest, parse_au_file, IngestSummary, Layout};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use crate::error::{Error, Result};
use crate::facs::{quantize_pspi, ActionUnitVector, PainClass, PainScore};
use crate::preprocess::BoundingBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub subject_id: String,
    pub sequence_id: String,
    pub frame_index: u64,
    pub image_path: PathBuf,
    pub au: ActionUnitVector,
    pub pspi: PainScore,
    pub pain_class: PainClass,
    /// Face location from a sidecar file, when the dataset provides one.
    pub face_box: Option<BoundingBox>,
}

impl FrameRecord {
    pub fn key(&self) -> (&str, &str, u64) {
        (&self.subject_id, &self.sequence_id, self.frame_index)
    }

    pub fn class(&self) -> usize {
        self.pain_class.index
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    records: Vec<FrameRecord>,
    subjects: BTreeSet<String>,
    n_classes: usize,
}

impl DatasetIndex {
    /// Builds an index from ingested records, checking that the class labels
    /// agree with `n_classes` and that frame keys are unique.
    pub fn new(mut records: Vec<FrameRecord>, n_classes: usize) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset("no frame records".into()));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &mut records {
            let expected = quantize_pspi(r.pspi, n_classes)?;
            if r.pain_class != expected {
                r.pain_class = expected;
            }
            if !seen.insert((r.subject_id.clone(), r.sequence_id.clone(), r.frame_index)) {
                return Err(Error::InvalidInput(format!(
                    "duplicate frame {}/{}/{}",
                    r.subject_id, r.sequence_id, r.frame_index
                )));
            }
        }
        records.sort_by(|a, b| a.key().cmp(&b.key()));
        Ok(Self::from_parts(records, n_classes))
    }

    /// No uniqueness check: resampled indexes legitimately repeat frames.
    pub(crate) fn from_parts(records: Vec<FrameRecord>, n_classes: usize) -> Self {
        let subjects = records.iter().map(|r| r.subject_id.clone()).collect();
        DatasetIndex {
            records,
            subjects,
            n_classes,
        }
    }

    pub fn records(&self) -> &[FrameRecord] {
        &self.records
    }

    pub fn subjects(&self) -> &BTreeSet<String> {
        &self.subjects
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records belonging to the given subjects, in index order. Errors when
    /// nothing matches.
    pub fn subset(&self, subjects: &BTreeSet<String>) -> Result<DatasetIndex> {
        let records: Vec<FrameRecord> = self
            .records
            .iter()
            .filter(|r| subjects.contains(&r.subject_id))
            .cloned()
            .collect();
        if records.is_empty() {
            return Err(Error::EmptyDataset(format!(
                "no frames for subjects {:?}",
                subjects
            )));
        }
        Ok(Self::from_parts(records, self.n_classes))
    }

    /// Re-labels every record for a different class count.
    pub fn with_n_classes(&self, n_classes: usize) -> Result<DatasetIndex> {
        let records = self
            .records
            .iter()
            .map(|r| {
                Ok(FrameRecord {
                    pain_class: quantize_pspi(r.pspi, n_classes)?,
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_parts(records, n_classes))
    }
}
