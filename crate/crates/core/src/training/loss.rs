use crate::dataset::ClassWeightTable;
use crate::error::{Error, Result};
use crate::models::{softmax_row, Matrix};

fn check(logits: &Matrix, targets: &[usize], weights: &ClassWeightTable) -> Result<()> {
    if targets.len() != logits.rows || targets.is_empty() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} targets", logits.rows),
            actual: format!("{}", targets.len()),
        });
    }
    if weights.n_classes() < logits.cols {
        return Err(Error::InvalidInput(format!(
            "class weights cover {} classes, logits have {}",
            weights.n_classes(),
            logits.cols
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= logits.cols) {
        return Err(Error::InvalidInput(format!(
            "target class {t} out of range for {} classes",
            logits.cols
        )));
    }
    if logits.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    Ok(())
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Weighted mean cross-entropy:
/// `sum_i w[y_i] * -log softmax(z_i)[y_i] / sum_i w[y_i]`.
pub fn weighted_cross_entropy(logits: &Matrix, targets: &[usize], weights: &ClassWeightTable) -> Result<f64> {
    check(logits, targets, weights)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.row(i);
        let w = weights.weight(t);
        num += w * (log_sum_exp(row) - row[t]);
        den += w;
    }
    if den <= 0.0 {
        return Err(Error::InvalidInput("every target has zero class weight".into()));
    }
    Ok(num / den)
}

/// Loss and its gradient with respect to the logits,
/// `w[y_i] * (softmax(z_i) - onehot(y_i)) / sum_j w[y_j]`.
pub fn weighted_cross_entropy_grad(
    logits: &Matrix,
    targets: &[usize],
    weights: &ClassWeightTable,
) -> Result<(f64, Matrix)> {
    let loss = weighted_cross_entropy(logits, targets, weights)?;
    let den: f64 = targets.iter().map(|&t| weights.weight(t)).sum();
    let mut grad = Matrix {
        rows: logits.rows,
        cols: logits.cols,
        data: vec![0.0; logits.data.len()],
    };
    for (i, &t) in targets.iter().enumerate() {
        let scale = weights.weight(t) / den;
        let g = grad.row_mut(i);
        softmax_row(logits.row(i), g);
        g[t] -= 1.0;
        g.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((loss, grad))
}

/// Plain mean cross-entropy.
pub fn cross_entropy(logits: &Matrix, targets: &[usize]) -> Result<f64> {
    weighted_cross_entropy(logits, targets, &ClassWeightTable::uniform(logits.cols))
}
