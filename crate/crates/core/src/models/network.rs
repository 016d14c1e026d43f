use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::arch::{Architecture, ModelSpec, SlotKind};
use super::layers::{collect_bn_stats, BnStats, Cache};
use super::tensor::{softmax, Matrix, Tensor};
use crate::error::{Error, Result};
use crate::seed::SeedHasher;

/// Momentum of the running batch-norm statistics.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub parameter_count: u64,
    /// Multiply-accumulates per image (one MAC counted as one FLOP).
    pub flop_count: u64,
}

/// An architecture together with its parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: Option<ModelSpec>,
    seed: u64,
    arch: Architecture,
    params: Vec<Vec<f64>>,
}

/// Activations recorded by [`Network::forward_train`].
#[derive(Debug)]
pub struct Tape {
    caches: Vec<Cache>,
    batch: usize,
}

/// One gradient buffer per parameter slot; buffers of non-trainable slots
/// stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub slots: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.slots
            .iter()
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

fn init_params(arch: &Architecture, seed: u64) -> Vec<Vec<f64>> {
    arch.slots
        .iter()
        .map(|slot| {
            let mut rng = SeedHasher::new(seed).str(&slot.name).rng();
            match slot.kind {
                SlotKind::ConvWeight { fan_in } => {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    (0..slot.len).map(|_| normal.sample(&mut rng)).collect()
                }
                SlotKind::LinearWeight { fan_in } => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    let uniform = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                    (0..slot.len).map(|_| uniform.sample(&mut rng)).collect()
                }
                SlotKind::BnScale | SlotKind::RunningVar => vec![1.0; slot.len],
                SlotKind::Bias | SlotKind::BnShift | SlotKind::RunningMean => vec![0.0; slot.len],
            }
        })
        .collect()
}

impl Network {
    /// Builds and initialises the network described by `spec`. Conv weights
    /// are He-normal, linear weights uniform in `±1/sqrt(fan_in)`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let arch = spec.architecture()?;
        let params = init_params(&arch, seed);
        Ok(Network {
            spec: Some(spec.clone()),
            seed,
            arch,
            params,
        })
    }

    pub fn from_architecture(arch: Architecture, seed: u64) -> Self {
        let params = init_params(&arch, seed);
        Network {
            spec: None,
            seed,
            arch,
            params,
        }
    }

    /// Rebuilds `spec` and installs previously saved parameters.
    pub fn with_parameters(spec: &ModelSpec, seed: u64, params: Vec<Vec<f64>>) -> Result<Self> {
        let mut net = Network::build(spec, seed)?;
        net.set_parameters(params)?;
        Ok(net)
    }

    pub fn set_parameters(&mut self, params: Vec<Vec<f64>>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameter slots", self.params.len()),
                actual: format!("{} slots", params.len()),
            });
        }
        for (slot, p) in self.arch.slots.iter().zip(&params) {
            if p.len() != slot.len {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} values in {}", slot.len, slot.name),
                    actual: format!("{} values", p.len()),
                });
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn spec(&self) -> Option<&ModelSpec> {
        self.spec.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn parameters(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.params
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    pub fn count_parameters(&self) -> u64 {
        self.arch.count_parameters()
    }

    pub fn count_flops(&self, input_size: usize) -> Result<u64> {
        self.arch.count_flops(input_size)
    }

    pub fn cost_report(&self) -> Result<CostReport> {
        Ok(CostReport {
            parameter_count: self.count_parameters(),
            flop_count: self.count_flops(self.arch.input_shape[1])?,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let [c, h, w] = self.arch.input_shape;
        let [n, xc, xh, xw] = x.shape;
        if n == 0 || [xc, xh, xw] != [c, h, w] || x.data.len() != n * c * h * w {
            return Err(Error::ShapeMismatch {
                expected: format!("batch x {c} x {h} x {w}"),
                actual: format!("{n} x {xc} x {xh} x {xw}"),
            });
        }
        Ok(())
    }

    fn to_matrix(&self, out: Tensor) -> Matrix {
        Matrix {
            rows: out.shape[0],
            cols: out.sample_len(),
            data: out.data,
        }
    }

    /// Inference-mode logits (batch norm uses running statistics).
    pub fn logits(&self, x: &Tensor) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.arch.layers {
            h = layer.forward(h, &self.params, None);
        }
        Ok(self.to_matrix(h))
    }

    /// Class probabilities, one softmax row per input image.
    pub fn forward(&self, x: &Tensor) -> Result<Matrix> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.argmax_rows())
    }

    /// Training-mode logits (batch statistics) plus the tape for
    /// [`Network::backward`].
    pub fn forward_train(&self, x: &Tensor) -> Result<(Matrix, Tape)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.arch.layers.len());
        let mut h = x.clone();
        for layer in &self.arch.layers {
            h = layer.forward(h, &self.params, Some(&mut caches));
        }
        Ok((
            self.to_matrix(h),
            Tape {
                caches,
                batch: x.batch(),
            },
        ))
    }

    /// Gradients of a scalar loss given `dlogits = dL/dlogits`, plus the
    /// batch-norm statistics observed in the forward pass.
    pub fn backward(&self, tape: Tape, dlogits: &Matrix) -> Result<(Gradients, BatchStats)> {
        if dlogits.rows != tape.batch || dlogits.cols != self.n_classes() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} x {}", tape.batch, self.n_classes()),
                actual: format!("{} x {}", dlogits.rows, dlogits.cols),
            });
        }
        let mut stats = Vec::new();
        collect_bn_stats(&self.arch.layers, &tape.caches, &mut stats);
        let mut grads: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.len()]).collect();
        let mut dy = Tensor {
            shape: [dlogits.rows, dlogits.cols, 1, 1],
            data: dlogits.data.clone(),
        };
        for (layer, cache) in self.arch.layers.iter().zip(tape.caches).rev() {
            dy = layer.backward(cache, dy, &self.params, &mut grads);
        }
        Ok((Gradients { slots: grads }, BatchStats(stats)))
    }

    /// Folds observed batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, stats: &BatchStats) {
        for s in &stats.0 {
            for (r, v) in self.params[s.mean_slot].iter_mut().zip(&s.mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
            }
            for (r, v) in self.params[s.var_slot].iter_mut().zip(&s.var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
            }
        }
    }

    /// Indices of slots updated by the optimiser.
    pub fn trainable_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.arch
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind.trainable())
            .map(|(i, _)| i)
    }
}

/// Per-batch batch-norm statistics, applied after the optimiser step.
#[derive(Debug, Clone, Default)]
pub struct BatchStats(Vec<BnStats>);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::arch::{ArchBuilder, ModelName};
    use crate::models::layers::Layer;
    use rand::Rng;

    fn random_batch(n: usize, size: usize, seed: u64) -> Tensor {
        let mut rng = SeedHasher::new(seed).rng();
        let data = (0..n * 3 * size * size).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new([n, 3, size, size], data).unwrap()
    }

    fn small_spec() -> ModelSpec {
        ModelSpec::new(ModelName::ReducedTestNet, 3, 16).with_width(0.125)
    }

    #[test]
    fn rows_are_distributions() {
        let net = Network::build(&small_spec(), 1).unwrap();
        let p = net.forward(&random_batch(4, 16, 2)).unwrap();
        assert_eq!((p.rows, p.cols), (4, 3));
        for i in 0..4 {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-5);
            assert!(p.row(i).iter().all(|&v| v > 0.0 && v < 1.0));
        }
        let logits = net.logits(&random_batch(4, 16, 2)).unwrap();
        assert_eq!(logits.argmax_rows(), p.argmax_rows());
    }

    #[test]
    fn identical_images_identical_rows() {
        let net = Network::build(&small_spec(), 1).unwrap();
        let one = random_batch(1, 16, 3);
        let mut data = one.data.clone();
        data.extend_from_slice(&one.data);
        let p = net.forward(&Tensor::new([2, 3, 16, 16], data).unwrap()).unwrap();
        assert_eq!(p.row(0), p.row(1));
    }

    #[test]
    fn zeroed_head_gives_uniform_probabilities() {
        let mut net = Network::build(&small_spec(), 1).unwrap();
        let head = net.architecture().final_linear().unwrap().clone();
        net.parameters_mut()[head.weight].fill(0.0);
        net.parameters_mut()[head.bias].fill(0.0);
        let p = net.forward(&random_batch(3, 16, 4)).unwrap();
        assert!(p.data.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Network::build(&small_spec(), 9).unwrap();
        let b = Network::build(&small_spec(), 9).unwrap();
        let c = Network::build(&small_spec(), 10).unwrap();
        assert_eq!(a.parameters(), b.parameters());
        assert_ne!(a.parameters(), c.parameters());
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let net = Network::build(&small_spec(), 1).unwrap();
        let err = net.forward(&random_batch(1, 20, 0)).unwrap_err().to_string();
        assert!(err.contains("3 x 16 x 16"), "{err}");
        assert!(err.contains("1 x 3 x 20 x 20"), "{err}");
    }

    #[test]
    fn zeroed_branches_make_blocks_identity() {
        let spec = ModelSpec::new(ModelName::Resnet18, 4, 32).with_width(0.125);
        let mut net = Network::build(&spec, 5).unwrap();
        let blocks: Vec<Layer> = net
            .architecture()
            .layers
            .iter()
            .filter(|l| matches!(l, Layer::Residual(_)))
            .cloned()
            .collect();
        for block in &blocks {
            let Layer::Residual(r) = block else { unreachable!() };
            for layer in &r.branch {
                for slot in layer.slots() {
                    if net.architecture().slots[slot].kind.trainable() {
                        net.parameters_mut()[slot].fill(0.0);
                    }
                }
            }
        }
        let mut tested = 0;
        for block in &blocks {
            let Layer::Residual(r) = block else { unreachable!() };
            if !r.shortcut.is_empty() {
                continue;
            }
            let c = match &r.branch[0] {
                Layer::Conv(c) => c.in_channels,
                _ => unreachable!(),
            };
            let data: Vec<f64> = (0..2 * c * 16).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
            let x = Tensor::new([2, c, 4, 4], data).unwrap();
            let y = block.forward(x.clone(), net.parameters(), None);
            assert_eq!(y, x);
            tested += 1;
        }
        assert_eq!(tested, 5);
    }

    #[test]
    fn running_stats_move_towards_batch_stats() {
        let mut b = ArchBuilder::new("bn", [3, 4, 4]);
        b.batch_norm().flatten().linear(2);
        let mut net = Network::from_architecture(b.finish().unwrap(), 0);
        let x = random_batch(5, 4, 8);
        let (logits, tape) = net.forward_train(&x).unwrap();
        let (_, stats) = net.backward(tape, &logits).unwrap();
        net.update_running_stats(&stats);
        let var_slot = 3;
        assert!(net.parameters()[var_slot].iter().all(|&v| v != 1.0));
        assert!(net.parameters()[2].iter().all(|&m| m.abs() < 0.1));
    }

    #[test]
    fn cost_report_is_positive() {
        let net = Network::build(&small_spec(), 0).unwrap();
        let cost = net.cost_report().unwrap();
        assert!(cost.parameter_count > 0 && cost.flop_count > 0);
    }
}
