use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetIndex, FrameRecord};
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Per-class frame counts, dense over `0..n_classes`.
pub fn class_counts(records: &[FrameRecord], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for r in records {
        counts[r.class()] += 1;
    }
    counts
}

/// Histogram over the classes that actually occur.
pub fn class_histogram(index: &DatasetIndex) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for r in index.records() {
        *hist.entry(r.class()).or_insert(0) += 1;
    }
    hist
}

/// Inverse-frequency class weights:
///
/// ```text
/// w_c = (1 / n_c) * (N / C)
/// ```
///
/// where `N` is the number of samples and `C` the number of classes with at
/// least one sample. Empty classes get weight 0 and are listed in `missing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeightTable {
    pub weights: Vec<f64>,
    pub counts: Vec<usize>,
    pub total_samples: usize,
    /// Number of classes with a non-zero count; the `C` of the formula.
    pub effective_classes: usize,
    pub missing: Vec<usize>,
}

impl ClassWeightTable {
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyDataset(
                "cannot weight classes of an empty histogram".into(),
            ));
        }
        let present = counts.iter().filter(|&&n| n > 0).count();
        let missing: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] == 0).collect();
        // N / (C * n_c) is the same quantity as (1/n_c)(N/C) with a single
        // rounding, so a uniform histogram yields exactly 1.0.
        let weights = counts
            .iter()
            .map(|&n| {
                if n == 0 {
                    0.0
                } else {
                    total as f64 / (present as f64 * n as f64)
                }
            })
            .collect();
        Ok(ClassWeightTable {
            weights,
            counts: counts.to_vec(),
            total_samples: total,
            effective_classes: present,
            missing,
        })
    }

    /// All-ones table; used for unweighted loss and metrics.
    pub fn uniform(n_classes: usize) -> Self {
        ClassWeightTable {
            weights: vec![1.0; n_classes],
            counts: vec![0; n_classes],
            total_samples: 0,
            effective_classes: n_classes,
            missing: Vec::new(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, class: usize) -> f64 {
        self.weights[class]
    }
}

pub fn compute_class_weights(index: &DatasetIndex) -> Result<ClassWeightTable> {
    let table = ClassWeightTable::from_counts(&class_counts(index.records(), index.n_classes()))?;
    if !table.missing.is_empty() {
        warn!(
            "classes {:?} have no samples; their loss weight is 0",
            table.missing
        );
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleStrategy {
    OversampleMinority,
    UndersampleMajority,
}

/// Balances class counts by duplicating minority frames (with replacement)
/// up to the majority count, or by subsampling every class down to the
/// minority count. Copies keep their subject and sequence identity.
pub fn resample(
    index: &DatasetIndex,
    strategy: ResampleStrategy,
    seed: u64,
) -> Result<DatasetIndex> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in index.records().iter().enumerate() {
        by_class.entry(r.class()).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(Error::InvalidInput(
            "resampling needs at least two classes present".into(),
        ));
    }
    let mut rng = rng_from(seed);
    let records = index.records();
    let out: Vec<FrameRecord> = match strategy {
        ResampleStrategy::OversampleMinority => {
            let target = by_class.values().map(Vec::len).max().unwrap();
            let mut out: Vec<FrameRecord> = records.to_vec();
            for members in by_class.values() {
                for _ in members.len()..target {
                    let pick = members[rng.random_range(0..members.len())];
                    out.push(records[pick].clone());
                }
            }
            out
        }
        ResampleStrategy::UndersampleMajority => {
            let target = by_class.values().map(Vec::len).min().unwrap();
            let mut keep = Vec::with_capacity(target * by_class.len());
            for members in by_class.values() {
                let mut m = members.clone();
                m.shuffle(&mut rng);
                keep.extend_from_slice(&m[..target]);
            }
            keep.sort_unstable();
            keep.into_iter().map(|i| records[i].clone()).collect()
        }
    };
    Ok(DatasetIndex::from_parts(out, index.n_classes()))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::index_from_scores;
    use super::*;
    use crate::facs::quantize_pspi;
    use proptest::prelude::*;

    #[test]
    fn histogram_examples() {
        let idx = index_from_scores(&[0; 6], 17);
        assert_eq!(class_histogram(&idx), BTreeMap::from([(0, 6)]));
        let idx = index_from_scores(&[0, 0, 1, 3], 17);
        assert_eq!(
            class_histogram(&idx),
            BTreeMap::from([(0, 2), (1, 1), (3, 1)])
        );
    }

    #[test]
    fn weights_worked_examples() {
        let t = ClassWeightTable::from_counts(&[90, 10]).unwrap();
        assert!((t.weights[0] - 100.0 / 180.0).abs() < 1e-12);
        assert!((t.weights[0] - 0.5556).abs() < 1e-4);
        assert_eq!(t.weights[1], 5.0);

        let t = ClassWeightTable::from_counts(&[1, 1, 2]).unwrap();
        assert!((t.weights[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((t.weights[1] - 4.0 / 3.0).abs() < 1e-12);
        assert!((t.weights[2] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_counts_give_exact_unit_weights() {
        for n in [1usize, 3, 7, 49, 97, 1000] {
            let t = ClassWeightTable::from_counts(&[n; 17]).unwrap();
            assert!(t.weights.iter().all(|&w| w == 1.0), "n={n}");
        }
    }

    #[test]
    fn empty_classes_get_zero_weight() {
        let idx = index_from_scores(&[0, 0, 0, 2], 17);
        let t = compute_class_weights(&idx).unwrap();
        assert_eq!(t.effective_classes, 2);
        assert_eq!(t.weights[1], 0.0);
        assert_eq!(t.missing.len(), 15);
        let total: f64 = t.counts.iter().zip(&t.weights).map(|(&n, &w)| n as f64 * w).sum();
        assert!((total - 4.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn weighted_total_equals_sample_count(counts in prop::collection::vec(0usize..5000, 2..18)) {
            prop_assume!(counts.iter().any(|&n| n > 0));
            let t = ClassWeightTable::from_counts(&counts).unwrap();
            let total: f64 = counts.iter().zip(&t.weights).map(|(&n, &w)| n as f64 * w).sum();
            let n = t.total_samples as f64;
            prop_assert!(((total - n) / n).abs() < 1e-9);
        }
    }

    #[test]
    fn oversample_matches_majority() {
        let idx = index_from_scores(&[0, 0, 0, 0, 5, 5], 17);
        let out = resample(&idx, ResampleStrategy::OversampleMinority, 1).unwrap();
        assert_eq!(class_histogram(&out), BTreeMap::from([(0, 4), (5, 4)]));
    }

    #[test]
    fn undersample_matches_minority() {
        let idx = index_from_scores(&[0, 0, 0, 0, 5, 5], 17);
        let out = resample(&idx, ResampleStrategy::UndersampleMajority, 1).unwrap();
        assert_eq!(class_histogram(&out), BTreeMap::from([(0, 2), (5, 2)]));
    }

    #[test]
    fn resample_is_seeded() {
        let idx = index_from_scores(&[0, 0, 0, 0, 0, 1, 2, 2, 9], 17);
        for strategy in [
            ResampleStrategy::OversampleMinority,
            ResampleStrategy::UndersampleMajority,
        ] {
            let a = resample(&idx, strategy, 42).unwrap();
            let b = resample(&idx, strategy, 42).unwrap();
            assert_eq!(a, b);
            for r in a.records() {
                assert_eq!(r.pain_class, quantize_pspi(r.pspi, 17).unwrap());
            }
        }
    }

    #[test]
    fn single_class_cannot_be_resampled() {
        let idx = index_from_scores(&[3, 3, 3], 17);
        assert!(resample(&idx, ResampleStrategy::OversampleMinority, 0).is_err());
    }
}
