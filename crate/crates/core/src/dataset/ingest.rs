use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synthetic::MANIFEST_FILE;
use super::{DatasetIndex, FrameRecord};
use crate::error::{Error, Result};
use crate::facs::{compute_pspi, quantize_pspi, ActionUnit, ActionUnitVector};
use crate::preprocess::BoundingBox;

pub(crate) const IMAGES_DIR: &str = "Images";
pub(crate) const FACS_DIR: [&str; 2] = ["Frame_Labels", "FACS"];
pub(crate) const BOXES_DIR: &str = "Face_Boxes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    UnbcLike,
    /// Same tree as `UnbcLike`, plus a generator manifest and mandatory
    /// face-box sidecars.
    Synthetic,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unbc_like" | "unbc" => Ok(Layout::UnbcLike),
            "synthetic" => Ok(Layout::Synthetic),
            other => Err(Error::config(
                "dataset.layout",
                format!("unknown layout {other:?} (expected unbc_like or synthetic)"),
            )),
        }
    }
}

/// Counts and warnings gathered while ingesting a dataset tree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub images_found: usize,
    pub records: usize,
    pub subjects: usize,
    pub skipped_missing_au: Vec<PathBuf>,
    pub frames_without_box: usize,
}

pub(crate) fn au_file_path(root: &Path, subject: &str, sequence: &str, frame: &str) -> PathBuf {
    root.join(FACS_DIR[0])
        .join(FACS_DIR[1])
        .join(subject)
        .join(sequence)
        .join(format!("{frame}_facs.txt"))
}

pub(crate) fn box_file_path(root: &Path, subject: &str, sequence: &str, frame: &str) -> PathBuf {
    root.join(BOXES_DIR)
        .join(subject)
        .join(sequence)
        .join(format!("{frame}_box.txt"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Trailing decimal digits of a frame stem, e.g. `ll042t1aaaff001` -> 1.
fn trailing_number(stem: &str) -> Option<u64> {
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

struct FrameFile {
    subject: String,
    sequence: String,
    stem: String,
    index: u64,
    image: PathBuf,
}

fn list_frames(root: &Path) -> Result<Vec<FrameFile>> {
    let images = root.join(IMAGES_DIR);
    if !images.is_dir() {
        return Err(Error::InvalidInput(format!(
            "{} is not a directory",
            images.display()
        )));
    }
    let mut frames = Vec::new();
    for subject_dir in sorted_entries(&images)?.into_iter().filter(|p| p.is_dir()) {
        let subject = file_name(&subject_dir);
        for seq_dir in sorted_entries(&subject_dir)?
            .into_iter()
            .filter(|p| p.is_dir())
        {
            let sequence = file_name(&seq_dir);
            let pngs: Vec<PathBuf> = sorted_entries(&seq_dir)?
                .into_iter()
                .filter(|p| {
                    p.extension()
                        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
                })
                .collect();
            for (pos, image) in pngs.into_iter().enumerate() {
                let stem = image
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let index = trailing_number(&stem).unwrap_or(pos as u64);
                frames.push(FrameFile {
                    subject: subject.clone(),
                    sequence: sequence.clone(),
                    stem,
                    index,
                    image,
                });
            }
        }
    }
    Ok(frames)
}

/// Parses one FACS label file. Each non-empty line is `<au_code> <intensity>`
/// with decimal numbers; codes outside the PSPI set are ignored and absent
/// units stay at 0.
pub fn parse_au_file(path: &Path) -> Result<ActionUnitVector> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut au = ActionUnitVector::default();
    let mut seen = [false; 6];
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(
                line_no,
                format!("expected \"<au_code> <intensity>\", got {line:?}"),
            ));
        }
        let number = |s: &str, what: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line_no, format!("{what} {s:?} is not a number")))
        };
        let code = number(fields[0], "AU code")?;
        let intensity = number(fields[1], "intensity")?;
        if code < 0.0 || code.fract() != 0.0 {
            return Err(parse_err(line_no, format!("invalid AU code {code}")));
        }
        let Some(unit) = ActionUnit::from_code(code as u32) else {
            continue;
        };
        let slot = ActionUnit::ALL.iter().position(|&u| u == unit).unwrap();
        if std::mem::replace(&mut seen[slot], true) {
            return Err(parse_err(line_no, format!("duplicate {unit} entry")));
        }
        au.set(unit, intensity)
            .map_err(|e| parse_err(line_no, e.to_string()))?;
    }
    Ok(au)
}

pub(crate) fn parse_box_file(path: &Path) -> Result<BoundingBox> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let vals = text
        .split_whitespace()
        .map(|t| t.parse::<u32>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("bad box value: {e}"),
        })?;
    match vals[..] {
        [x, y, w, h] => Ok(BoundingBox { x, y, w, h }),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected \"x y w h\", got {} values", vals.len()),
        }),
    }
}

/// Reads a dataset tree into a sorted [`DatasetIndex`].
///
/// Images without a label file are skipped and reported in the summary.
/// A malformed label file aborts ingestion.
pub fn ingest(
    root: &Path,
    layout: Layout,
    n_classes: usize,
) -> Result<(DatasetIndex, IngestSummary)> {
    if !root.is_dir() {
        return Err(Error::InvalidInput(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    if layout == Layout::Synthetic && !root.join(MANIFEST_FILE).is_file() {
        return Err(Error::InvalidInput(format!(
            "{} has no {MANIFEST_FILE}; not a synthetic dataset",
            root.display()
        )));
    }
    let frames = list_frames(root)?;

    let parsed: Vec<Result<std::result::Result<FrameRecord, PathBuf>>> = frames
        .par_iter()
        .map(|f| {
            let au_path = au_file_path(root, &f.subject, &f.sequence, &f.stem);
            if !au_path.is_file() {
                return Ok(Err(f.image.clone()));
            }
            let au = parse_au_file(&au_path)?;
            let pspi = compute_pspi(&au)?;
            let box_path = box_file_path(root, &f.subject, &f.sequence, &f.stem);
            let face_box = if box_path.is_file() {
                Some(parse_box_file(&box_path)?)
            } else if layout == Layout::Synthetic {
                return Err(Error::InvalidInput(format!(
                    "synthetic dataset is missing {}",
                    box_path.display()
                )));
            } else {
                None
            };
            Ok(Ok(FrameRecord {
                subject_id: f.subject.clone(),
                sequence_id: f.sequence.clone(),
                frame_index: f.index,
                image_path: f.image.clone(),
                au,
                pspi,
                pain_class: quantize_pspi(pspi, n_classes)?,
                face_box,
            }))
        })
        .collect();

    let mut summary = IngestSummary {
        images_found: frames.len(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(frames.len());
    for item in parsed {
        match item? {
            Ok(rec) => records.push(rec),
            Err(image) => summary.skipped_missing_au.push(image),
        }
    }
    if !summary.skipped_missing_au.is_empty() {
        warn!(
            "skipped {} image(s) without an AU label file",
            summary.skipped_missing_au.len()
        );
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no labelled frames under {}",
            root.display()
        )));
    }
    summary.frames_without_box = records.iter().filter(|r| r.face_box.is_none()).count();
    let index = DatasetIndex::new(records, n_classes)?;
    summary.records = index.len();
    summary.subjects = index.subjects().len();
    Ok((index, summary))
}
