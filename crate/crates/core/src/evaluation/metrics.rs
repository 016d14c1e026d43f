use serde::{Deserialize, Serialize};

use crate::dataset::ClassWeightTable;
use crate::error::{Error, Result};

/// Headline metrics on PSPI class indices. `accuracy` is a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
    pub accuracy: f64,
}

/// MAE, MSE and accuracy of predicted against true class indices.
///
/// With `class_weights`, each frame contributes in proportion to the weight
/// of its true class and the sums are divided by the total applied weight.
pub fn compute_metrics(
    predictions: &[usize],
    targets: &[usize],
    class_weights: Option<&ClassWeightTable>,
) -> Result<Metrics> {
    if predictions.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    let (mut abs, mut sq, mut hits, mut total) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &t) in predictions.iter().zip(targets) {
        let w = match class_weights {
            Some(table) => *table.weights.get(t).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "target class {t} has no weight (table covers {} classes)",
                    table.n_classes()
                ))
            })?,
            None => 1.0,
        };
        let d = p.abs_diff(t) as f64;
        abs += w * d;
        sq += w * d * d;
        if p == t {
            hits += w;
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::InvalidInput(
            "class weights of every target are zero".into(),
        ));
    }
    Ok(Metrics {
        mae: abs / total,
        mse: sq / total,
        accuracy: 100.0 * hits / total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Per-class precision, recall and F1. Undefined ratios (no predictions or
/// no support) are reported as 0.
pub fn per_class_scores(predictions: &[usize], targets: &[usize], n_classes: usize) -> Vec<ClassScores> {
    let mut tp = vec![0usize; n_classes];
    let mut predicted = vec![0usize; n_classes];
    let mut support = vec![0usize; n_classes];
    for (&p, &t) in predictions.iter().zip(targets) {
        if p < n_classes {
            predicted[p] += 1;
        }
        if t < n_classes {
            support[t] += 1;
        }
        if p == t && t < n_classes {
            tp[t] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (0..n_classes)
        .map(|c| {
            let precision = ratio(tp[c], predicted[c]);
            let recall = ratio(tp[c], support[c]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScores {
                class: c,
                precision,
                recall,
                f1,
                support: support[c],
            }
        })
        .collect()
}
