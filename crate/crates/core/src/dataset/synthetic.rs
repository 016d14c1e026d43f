//! Procedural face frames whose geometry follows the PSPI action units.
//!
//! Each frame is an oval face on a noisy background. Brows drop and knit with
//! AU4, cheeks flush and eyes narrow with AU6/AU7, eyes shut with AU43,
//! horizontal wrinkles cross the nose with AU9 and the upper lip lifts with
//! AU10. Target PSPI values are drawn from the interior of each class band so
//! neighbouring bands differ by at least two PSPI points.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ingest::{au_file_path, box_file_path, IMAGES_DIR};
use super::{DatasetIndex, FrameRecord};
use crate::error::{Error, Result};
use crate::facs::{class_score_range, compute_pspi, quantize_pspi, ActionUnit, ActionUnitVector};
use crate::preprocess::{BoundingBox, ImageTensor};
use crate::seed::SeedHasher;

pub const MANIFEST_FILE: &str = "synthetic_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_subjects: usize,
    pub frames_per_subject: usize,
    pub sequences_per_subject: usize,
    pub image_size: usize,
    /// Fraction of frames per class band; its length is the class count.
    pub class_mix: Vec<f64>,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_subjects: 10,
            frames_per_subject: 100,
            sequences_per_subject: 2,
            image_size: 48,
            class_mix: vec![0.7, 0.2, 0.1],
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |f: &str, m: String| Err(Error::config(format!("synthetic.{f}"), m));
        if self.n_subjects == 0 {
            return err("n_subjects", "must be positive".into());
        }
        if self.frames_per_subject == 0 {
            return err("frames_per_subject", "must be positive".into());
        }
        if self.sequences_per_subject == 0 || self.sequences_per_subject > self.frames_per_subject {
            return err(
                "sequences_per_subject",
                format!("must lie in 1..={}", self.frames_per_subject),
            );
        }
        if self.image_size < 32 {
            return err("image_size", format!("must be at least 32, got {}", self.image_size));
        }
        let n = self.class_mix.len();
        if !(2..=17).contains(&n) {
            return err("class_mix", format!("needs 2..=17 entries, got {n}"));
        }
        if self.class_mix.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return err("class_mix", "entries must be non-negative".into());
        }
        let total: f64 = self.class_mix.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return err("class_mix", format!("must sum to 1, sums to {total}"));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.class_mix.len()
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    generator: String,
    version: u32,
    config: SyntheticConfig,
}

/// Splits `total` into integer counts proportional to `mix` (largest
/// remainder, ties to the lower class).
pub(crate) fn allocate(total: usize, mix: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = mix.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..mix.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &c in order.iter().take(total - assigned) {
        counts[c] += 1;
    }
    counts
}

/// PSPI values used for class `band`: its score range minus the scores that
/// touch a neighbouring band.
fn band_core(band: usize, n_bands: usize) -> Vec<u8> {
    let (lo, hi) = class_score_range(band, n_bands).expect("n_bands <= 17");
    let lo_core = if band > 0 && hi > lo { lo + 1 } else { lo };
    let hi_core = if band + 1 < n_bands && hi > lo_core { hi - 1 } else { hi };
    (lo_core..=hi_core).collect()
}

/// A random action-unit vector whose PSPI equals `target`.
pub(crate) fn sample_action_units(target: u8, rng: &mut impl Rng) -> ActionUnitVector {
    assert!(target <= 16);
    let au43 = if target > 15 || (target > 0 && rng.random::<f64>() < f64::from(target) / 16.0) {
        1
    } else {
        0
    };
    let rest = target - au43;
    let triples: Vec<(u8, u8, u8)> = (0..=5u8)
        .flat_map(|a| (0..=5u8).map(move |b| (a, b)))
        .filter_map(|(a, b)| {
            let c = i16::from(rest) - i16::from(a) - i16::from(b);
            (0..=5).contains(&c).then_some((a, b, c as u8))
        })
        .collect();
    let (au4, eye, nose) = *triples.choose(rng).expect("target within range");
    let mut pair = |peak: u8| {
        let other = rng.random_range(0..=peak);
        if rng.random::<bool>() {
            (peak, other)
        } else {
            (other, peak)
        }
    };
    let (au6, au7) = pair(eye);
    let (au9, au10) = pair(nose);
    ActionUnitVector {
        au4,
        au6,
        au7,
        au9,
        au10,
        au43,
    }
}

struct Appearance {
    skin: [f64; 3],
    background: [f64; 3],
    feature: [f64; 3],
    face_scale: f64,
}

impl Appearance {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let tone: f64 = rng.random_range(0.55..1.05);
        let skin = [
            (0.86 * tone + rng.random_range(-0.04..0.04)).clamp(0.2, 0.98),
            (0.68 * tone + rng.random_range(-0.04..0.04)).clamp(0.15, 0.95),
            (0.56 * tone + rng.random_range(-0.04..0.04)).clamp(0.1, 0.9),
        ];
        let background = [
            rng.random_range(0.1..0.9),
            rng.random_range(0.1..0.9),
            rng.random_range(0.1..0.9),
        ];
        let f = rng.random_range(0.05..0.25);
        Appearance {
            skin,
            background,
            feature: [f, f * 0.9, f * 0.8],
            face_scale: rng.random_range(0.62..0.72),
        }
    }
}

/// Soft-edged rasteriser over an RGB canvas.
struct Canvas {
    img: ImageTensor,
}

impl Canvas {
    fn blend(&mut self, x: usize, y: usize, color: [f64; 3], alpha: f64) {
        if alpha <= 0.0 {
            return;
        }
        for (c, &col) in color.iter().enumerate() {
            let p = self.img.at_mut(c, y, x);
            *p = *p * (1.0 - alpha) + col * alpha;
        }
    }

    /// Applies `coverage(px, py)` (signed distance in pixels; negative inside)
    /// over the pixels of a bounding rectangle.
    fn paint(
        &mut self,
        bounds: (f64, f64, f64, f64),
        color: [f64; 3],
        alpha: f64,
        sdf: impl Fn(f64, f64) -> f64,
    ) {
        let (x0, y0, x1, y1) = bounds;
        let size = self.img.width as f64;
        let xa = (x0 - 1.0).floor().clamp(0.0, size - 1.0) as usize;
        let xb = (x1 + 1.0).ceil().clamp(0.0, size - 1.0) as usize;
        let ya = (y0 - 1.0).floor().clamp(0.0, size - 1.0) as usize;
        let yb = (y1 + 1.0).ceil().clamp(0.0, size - 1.0) as usize;
        for y in ya..=yb {
            for x in xa..=xb {
                let d = sdf(x as f64 + 0.5, y as f64 + 0.5);
                let cover = (0.5 - d).clamp(0.0, 1.0);
                self.blend(x, y, color, alpha * cover);
            }
        }
    }

    fn ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, color: [f64; 3], alpha: f64) {
        let rmin = rx.min(ry).max(1e-6);
        self.paint((cx - rx, cy - ry, cx + rx, cy + ry), color, alpha, |px, py| {
            let k = (((px - cx) / rx).powi(2) + ((py - cy) / ry).powi(2)).sqrt();
            (k - 1.0) * rmin
        });
    }

    fn segment(&mut self, a: (f64, f64), b: (f64, f64), half_width: f64, color: [f64; 3], alpha: f64) {
        let bounds = (
            a.0.min(b.0) - half_width,
            a.1.min(b.1) - half_width,
            a.0.max(b.0) + half_width,
            a.1.max(b.1) + half_width,
        );
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = (dx * dx + dy * dy).max(1e-12);
        self.paint(bounds, color, alpha, |px, py| {
            let t = (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0);
            let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
            ((px - qx).powi(2) + (py - qy).powi(2)).sqrt() - half_width
        });
    }
}

/// Draws one frame; returns the image (values in `[0, 1]`) and its face box.
fn render_face(
    size: usize,
    look: &Appearance,
    au: &ActionUnitVector,
    rng: &mut ChaCha8Rng,
) -> (ImageTensor, BoundingBox) {
    let s = size as f64;
    let mut canvas = Canvas {
        img: ImageTensor::filled(size, size, 0.0),
    };

    // background with a gentle vertical gradient
    let grad = rng.random_range(-0.15..0.15);
    for y in 0..size {
        let shade = 1.0 + grad * (y as f64 / s - 0.5);
        for x in 0..size {
            for c in 0..3 {
                *canvas.img.at_mut(c, y, x) = (look.background[c] * shade).clamp(0.0, 1.0);
            }
        }
    }

    let w = (look.face_scale * s * rng.random_range(0.97..1.03)).min(0.92 * s);
    let h = (1.2 * w).min(0.96 * s);
    let cx = s / 2.0 + rng.random_range(-0.04..0.04) * s;
    let cy = s / 2.0 + rng.random_range(-0.03..0.03) * s;
    let bx = (cx - w / 2.0).round().clamp(0.0, s - 1.0);
    let by = (cy - h / 2.0).round().clamp(0.0, s - 1.0);
    let bw = w.round().min(s - bx).max(1.0);
    let bh = h.round().min(s - by).max(1.0);
    let bbox = BoundingBox::new(bx as u32, by as u32, bw as u32, bh as u32);
    let p = |u: f64, v: f64| (bx + u * bw, by + v * bh);

    let light = rng.random_range(0.9..1.1);
    let skin = look.skin.map(|c| (c * light).clamp(0.0, 1.0));
    let dark = look.feature;
    let level = |au: ActionUnit, v: u8| f64::from(v) / f64::from(au.max_intensity());
    let brow = level(ActionUnit::Au4, au.au4);
    let cheek = level(ActionUnit::Au6, au.au6);
    let lid = level(ActionUnit::Au7, au.au7);
    let wrinkle = au.au9;
    let lip = level(ActionUnit::Au10, au.au10);
    let closed = au.au43 == 1;

    let (hx, hy) = p(0.5, 0.5);
    canvas.ellipse(hx, hy, bw / 2.0, bh / 2.0, skin, 1.0);

    // cheeks flush and bulge with AU6
    for side in [-1.0, 1.0] {
        let (ex, ey) = p(0.5 + side * 0.24, 0.6);
        canvas.ellipse(ex, ey, 0.12 * bw, 0.08 * bh, [0.78, 0.3, 0.3], 0.6 * cheek);
    }

    // eyes: aperture shrinks with AU7 (and a little with AU6); AU43 shuts them
    let openness = if closed {
        0.0
    } else {
        (1.0 - 0.75 * lid - 0.1 * cheek).max(0.15)
    };
    for side in [-1.0, 1.0] {
        let (ex, ey) = p(0.5 + side * 0.19, 0.43);
        let rx = 0.11 * bw;
        let ry = 0.085 * bh * openness;
        if closed {
            canvas.segment((ex - rx, ey), (ex + rx, ey), 0.6, dark, 1.0);
        } else {
            canvas.ellipse(ex, ey, rx, ry.max(0.5), [0.95, 0.95, 0.93], 1.0);
            let iris = (0.05 * bw).min(ry.max(0.5));
            canvas.ellipse(ex, ey, iris, iris, dark, 1.0);
            canvas.segment((ex - rx, ey - ry), (ex + rx, ey - ry), 0.5, dark, 0.9);
        }
        // lower-lid crease from cheek raising
        canvas.segment(
            (ex - 0.8 * rx, ey + 0.09 * bh),
            (ex + 0.8 * rx, ey + 0.09 * bh),
            0.5,
            dark,
            0.7 * cheek,
        );
    }

    // brows drop and knit with AU4
    for side in [-1.0, 1.0] {
        let inner = p(0.5 + side * 0.07, 0.27 + 0.11 * brow);
        let outer = p(0.5 + side * 0.31, 0.26 + 0.05 * brow);
        canvas.segment(inner, outer, 0.035 * bh, dark, 0.95);
    }
    for du in [-0.03, 0.03] {
        canvas.segment(p(0.5 + du, 0.3), p(0.5 + du, 0.4), 0.5, dark, 0.8 * brow);
    }

    // nose bridge, nostrils and AU9 wrinkles
    canvas.segment(p(0.5, 0.45), p(0.5, 0.62), 0.5, dark, 0.25);
    for side in [-1.0, 1.0] {
        let (nx, ny) = p(0.5 + side * 0.05, 0.64);
        canvas.ellipse(nx, ny, 0.03 * bw, 0.02 * bh, dark, 0.8);
    }
    for i in 0..wrinkle {
        let v = 0.46 + 0.03 * f64::from(i);
        canvas.segment(p(0.42, v), p(0.58, v), 0.5, dark, 0.85);
    }

    // mouth: AU10 lifts the upper lip and deepens nasolabial folds
    let lower = 0.82;
    let upper = lower - 0.01 - 0.1 * lip;
    for side in [-1.0, 1.0] {
        canvas.segment(p(0.5 + side * 0.09, 0.63), p(0.5 + side * 0.19, 0.8), 0.5, dark, 0.8 * lip);
    }
    let (mx, my) = p(0.5, (upper + lower) / 2.0);
    canvas.ellipse(mx, my, 0.17 * bw, ((lower - upper) / 2.0 * bh).max(0.6), [0.3, 0.05, 0.06], 1.0);

    let noise = Normal::new(0.0, 0.03).expect("valid sigma");
    for v in canvas.img.data.iter_mut() {
        *v = (*v + noise.sample(rng)).clamp(0.0, 1.0);
    }
    (canvas.img, bbox)
}

struct FrameSpec {
    subject: String,
    sequence: String,
    index: u64,
    band: usize,
    subject_no: usize,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes a synthetic dataset in the UNBC-like layout under `out` and returns
/// the index of the frames it intended to write.
pub fn generate_synthetic(config: &SyntheticConfig, out: &Path) -> Result<DatasetIndex> {
    config.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest = Manifest {
        generator: "painpipe-synthetic".into(),
        version: 1,
        config: config.clone(),
    };
    write_file(
        &out.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;

    let n_bands = config.n_classes();
    let width = config.n_subjects.to_string().len().max(2);
    let appearances: Vec<Appearance> = (0..config.n_subjects)
        .map(|s| Appearance::random(&mut SeedHasher::new(config.seed).str("look").u64(s as u64).rng()))
        .collect();

    let mut specs = Vec::with_capacity(config.n_subjects * config.frames_per_subject);
    for s in 0..config.n_subjects {
        let subject = format!("S{:0width$}", s + 1);
        let mut bands: Vec<usize> = allocate(config.frames_per_subject, &config.class_mix)
            .into_iter()
            .enumerate()
            .flat_map(|(b, n)| std::iter::repeat_n(b, n))
            .collect();
        bands.shuffle(&mut SeedHasher::new(config.seed).str("bands").u64(s as u64).rng());
        let per_seq = config.frames_per_subject.div_ceil(config.sequences_per_subject);
        for (f, band) in bands.into_iter().enumerate() {
            specs.push(FrameSpec {
                subject: subject.clone(),
                sequence: format!("seq{}", f / per_seq + 1),
                index: (f % per_seq) as u64,
                band,
                subject_no: s,
            });
        }
    }

    let records = specs
        .par_iter()
        .map(|spec| -> Result<FrameRecord> {
            let mut rng = SeedHasher::new(config.seed)
                .str(&spec.subject)
                .str(&spec.sequence)
                .u64(spec.index)
                .rng();
            let core = band_core(spec.band, n_bands);
            let target = *core.choose(&mut rng).expect("non-empty band");
            let au = sample_action_units(target, &mut rng);
            let pspi = compute_pspi(&au)?;
            debug_assert_eq!(pspi.value(), target);
            let (img, bbox) = render_face(config.image_size, &appearances[spec.subject_no], &au, &mut rng);

            let stem = format!("frame{:04}", spec.index);
            let image_path: PathBuf = out
                .join(IMAGES_DIR)
                .join(&spec.subject)
                .join(&spec.sequence)
                .join(format!("{stem}.png"));
            if let Some(parent) = image_path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            img.to_rgb8().save(&image_path).map_err(|e| Error::Image {
                path: image_path.clone(),
                message: e.to_string(),
            })?;
            let facs: String = ActionUnit::ALL
                .iter()
                .map(|&u| format!("{} {}\n", u.code(), au.get(u)))
                .collect();
            write_file(&au_file_path(out, &spec.subject, &spec.sequence, &stem), facs.as_bytes())?;
            let boxtxt = format!("{} {} {} {}\n", bbox.x, bbox.y, bbox.w, bbox.h);
            write_file(&box_file_path(out, &spec.subject, &spec.sequence, &stem), boxtxt.as_bytes())?;

            Ok(FrameRecord {
                subject_id: spec.subject.clone(),
                sequence_id: spec.sequence.clone(),
                frame_index: spec.index,
                image_path,
                au,
                pspi,
                pain_class: quantize_pspi(pspi, n_bands)?,
                face_box: Some(bbox),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DatasetIndex::new(records, n_bands)
}
