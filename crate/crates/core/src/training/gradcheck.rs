use serde::Serialize;

use super::loss::{weighted_cross_entropy, weighted_cross_entropy_grad};
use crate::dataset::ClassWeightTable;
use crate::error::{Error, Result};
use crate::models::{Gradients, Network, Tensor};
use crate::seed::rng_from;

/// Finite-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so parameters whose true
/// gradient is zero are compared on an absolute scale.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Networks above this size are rejected: each sampled parameter costs two
/// full forward passes.
pub const GRADCHECK_MAX_PARAMS: u64 = 5_000;

#[derive(Debug, Clone, Serialize)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    pub analytic_norm: f64,
}

/// Analytic gradient of the weighted cross-entropy (training-mode forward).
pub fn loss_gradient(
    net: &Network,
    batch: &Tensor,
    targets: &[usize],
    weights: &ClassWeightTable,
) -> Result<(f64, Gradients)> {
    let (logits, tape) = net.forward_train(batch)?;
    let (loss, dlogits) = weighted_cross_entropy_grad(&logits, targets, weights)?;
    let (grads, _) = net.backward(tape, &dlogits)?;
    Ok((loss, grads))
}

/// Compares backpropagated gradients with central differences on
/// `n_samples` randomly chosen trainable parameters.
///
/// The relative error of one parameter is
/// `|a - n| / max(|a|, |n|, GRADCHECK_FLOOR)`.
pub fn gradient_check(
    net: &Network,
    batch: &Tensor,
    targets: &[usize],
    weights: &ClassWeightTable,
    n_samples: usize,
    seed: u64,
) -> Result<GradientCheck> {
    if net.count_parameters() > GRADCHECK_MAX_PARAMS {
        return Err(Error::InvalidInput(format!(
            "gradient check needs at most {GRADCHECK_MAX_PARAMS} parameters, network has {}",
            net.count_parameters()
        )));
    }
    let (_, grads) = loss_gradient(net, batch, targets, weights)?;
    let positions: Vec<(usize, usize)> = net
        .trainable_slots()
        .flat_map(|s| (0..net.parameters()[s].len()).map(move |i| (s, i)))
        .collect();
    if positions.is_empty() {
        return Err(Error::InvalidInput("network has no trainable parameters".into()));
    }
    let mut rng = rng_from(seed);
    let mut probe = net.clone();
    let loss_at = |probe: &Network| -> Result<f64> {
        let (logits, _) = probe.forward_train(batch)?;
        weighted_cross_entropy(&logits, targets, weights)
    };
    let mut worst: f64 = 0.0;
    let n = n_samples.min(positions.len());
    let chosen = rand::seq::index::sample(&mut rng, positions.len(), n);
    for k in chosen.iter() {
        let (s, i) = positions[k];
        let original = probe.parameters()[s][i];
        probe.parameters_mut()[s][i] = original + GRADCHECK_STEP;
        let up = loss_at(&probe)?;
        probe.parameters_mut()[s][i] = original - GRADCHECK_STEP;
        let down = loss_at(&probe)?;
        probe.parameters_mut()[s][i] = original;
        let numeric = (up - down) / (2.0 * GRADCHECK_STEP);
        let analytic = grads.slots[s][i];
        let denom = analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(GradientCheck {
        max_relative_error: worst,
        checked: n,
        analytic_norm: grads.norm(),
    })
}
