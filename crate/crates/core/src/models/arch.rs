use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm2d, Conv2d, Layer, Linear, MaxPool2d, Residual, SlotId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Vgg16,
    Resnet18,
    Resnet34,
    /// Three-stage residual network for CPU-scale experiments.
    ReducedTestNet,
}

impl ModelName {
    pub const ALL: [ModelName; 4] = [
        ModelName::Vgg16,
        ModelName::Resnet18,
        ModelName::Resnet34,
        ModelName::ReducedTestNet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Vgg16 => "vgg16",
            ModelName::Resnet18 => "resnet18",
            ModelName::Resnet34 => "resnet34",
            ModelName::ReducedTestNet => "reduced_test_net",
        }
    }
}

impl std::fmt::Display for ModelName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::config(
                    "model.name",
                    format!(
                        "unknown model {s:?} (expected one of vgg16, resnet18, resnet34, reduced_test_net)"
                    ),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: ModelName,
    #[serde(default = "default_n_classes")]
    pub n_classes: usize,
    #[serde(default = "default_input_size")]
    pub input_size: usize,
    #[serde(default = "default_width")]
    pub width_multiplier: f64,
}

fn default_n_classes() -> usize {
    crate::facs::PSPI_LEVELS
}

fn default_input_size() -> usize {
    224
}

fn default_width() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn new(name: ModelName, n_classes: usize, input_size: usize) -> Self {
        ModelSpec {
            name,
            n_classes,
            input_size,
            width_multiplier: 1.0,
        }
    }

    pub fn with_width(mut self, width_multiplier: f64) -> Self {
        self.width_multiplier = width_multiplier;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::config("model.n_classes", "must be at least 2"));
        }
        if self.input_size == 0 {
            return Err(Error::config("model.input_size", "must be positive"));
        }
        if !(self.width_multiplier > 0.0 && self.width_multiplier <= 1.0) {
            return Err(Error::config(
                "model.width_multiplier",
                format!("must lie in (0, 1], got {}", self.width_multiplier),
            ));
        }
        Ok(())
    }

    /// Scaled channel count, never below one.
    pub fn channels(&self, base: usize) -> usize {
        ((base as f64 * self.width_multiplier).round() as usize).max(1)
    }

    pub fn architecture(&self) -> Result<Architecture> {
        self.validate()?;
        match self.name {
            ModelName::Vgg16 => vgg16(self),
            ModelName::Resnet18 => resnet(self, &[2, 2, 2, 2]),
            ModelName::Resnet34 => resnet(self, &[3, 4, 6, 3]),
            ModelName::ReducedTestNet => reduced_test_net(self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    ConvWeight { fan_in: usize },
    LinearWeight { fan_in: usize },
    Bias,
    BnScale,
    BnShift,
    RunningMean,
    RunningVar,
}

impl SlotKind {
    pub fn trainable(self) -> bool {
        !matches!(self, SlotKind::RunningMean | SlotKind::RunningVar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub len: usize,
    pub kind: SlotKind,
}

/// Layer graph plus the parameter layout it addresses. Holds no weights, so
/// large networks can be counted without allocating them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub label: String,
    pub input_shape: [usize; 3],
    pub n_classes: usize,
    pub layers: Vec<Layer>,
    pub slots: Vec<Slot>,
}

impl Architecture {
    pub fn count_parameters(&self) -> u64 {
        self.slots
            .iter()
            .filter(|s| s.kind.trainable())
            .map(|s| s.len as u64)
            .sum()
    }

    /// Multiply-accumulates for one `3 x size x size` image.
    pub fn count_flops(&self, input_size: usize) -> Result<u64> {
        fn walk(layers: &[Layer], mut shape: [usize; 3], total: &mut u64) -> Option<[usize; 3]> {
            for layer in layers {
                let out = layer.out_shape(shape)?;
                match layer {
                    Layer::Conv(c) => {
                        *total += (out[1] * out[2] * c.out_channels * c.kernel * c.kernel * c.in_channels)
                            as u64;
                    }
                    Layer::Linear(l) => *total += (l.in_features * l.out_features) as u64,
                    Layer::Residual(r) => {
                        walk(&r.branch, shape, total)?;
                        walk(&r.shortcut, shape, total)?;
                    }
                    _ => {}
                }
                shape = out;
            }
            Some(shape)
        }
        let mut total = 0;
        let input = [self.input_shape[0], input_size, input_size];
        walk(&self.layers, input, &mut total).ok_or_else(|| Error::ShapeMismatch {
            expected: format!("an input size the {} layer graph accepts", self.label),
            actual: format!("{input:?}"),
        })?;
        Ok(total)
    }

    pub fn output_shape(&self, input: [usize; 3]) -> Option<[usize; 3]> {
        self.layers.iter().try_fold(input, |s, l| l.out_shape(s))
    }

    pub fn final_linear(&self) -> Option<&Linear> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer::Linear(l) => Some(l),
            _ => None,
        })
    }
}

/// Incremental builder for layer graphs. Shape errors are latched and
/// reported by [`ArchBuilder::finish`].
#[derive(Debug)]
pub struct ArchBuilder {
    label: String,
    input_shape: [usize; 3],
    shape: [usize; 3],
    layers: Vec<Layer>,
    slots: Vec<Slot>,
    prefix: String,
    error: Option<Error>,
}

impl ArchBuilder {
    pub fn new(label: impl Into<String>, input_shape: [usize; 3]) -> Self {
        ArchBuilder {
            label: label.into(),
            input_shape,
            shape: input_shape,
            layers: Vec::new(),
            slots: Vec::new(),
            prefix: String::new(),
            error: None,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    fn slot(&mut self, name: &str, len: usize, kind: SlotKind) -> SlotId {
        let index = self.slots.len();
        self.slots.push(Slot {
            name: format!("{}{}.{}", self.prefix, self.layers.len(), name),
            len,
            kind,
        });
        index
    }

    fn push(&mut self, layer: Layer) -> &mut Self {
        if self.error.is_some() {
            return self;
        }
        match layer.out_shape(self.shape) {
            Some(s) => {
                self.shape = s;
                self.layers.push(layer);
            }
            None => {
                self.error = Some(Error::ShapeMismatch {
                    expected: format!("input accepted by layer {} of {}", self.layers.len(), self.label),
                    actual: format!("{:?}", self.shape),
                });
            }
        }
        self
    }

    pub fn conv(&mut self, out_channels: usize, kernel: usize, stride: usize, padding: usize, bias: bool) -> &mut Self {
        let in_channels = self.shape[0];
        let fan_in = in_channels * kernel * kernel;
        let weight = self.slot("weight", out_channels * fan_in, SlotKind::ConvWeight { fan_in });
        let bias = bias.then(|| self.slot("bias", out_channels, SlotKind::Bias));
        self.push(Layer::Conv(Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight,
            bias,
        }))
    }

    pub fn batch_norm(&mut self) -> &mut Self {
        let c = self.shape[0];
        let bn = BatchNorm2d {
            channels: c,
            gamma: self.slot("gamma", c, SlotKind::BnScale),
            beta: self.slot("beta", c, SlotKind::BnShift),
            running_mean: self.slot("running_mean", c, SlotKind::RunningMean),
            running_var: self.slot("running_var", c, SlotKind::RunningVar),
        };
        self.push(Layer::BatchNorm(bn))
    }

    pub fn relu(&mut self) -> &mut Self {
        self.push(Layer::Relu)
    }

    pub fn max_pool(&mut self, kernel: usize, stride: usize, padding: usize) -> &mut Self {
        self.push(Layer::MaxPool(MaxPool2d {
            kernel,
            stride,
            padding,
        }))
    }

    pub fn global_avg_pool(&mut self) -> &mut Self {
        self.push(Layer::GlobalAvgPool)
    }

    pub fn flatten(&mut self) -> &mut Self {
        self.push(Layer::Flatten)
    }

    pub fn linear(&mut self, out_features: usize) -> &mut Self {
        let in_features = self.shape.iter().product();
        let weight = self.slot(
            "weight",
            in_features * out_features,
            SlotKind::LinearWeight { fan_in: in_features },
        );
        let bias = self.slot("bias", out_features, SlotKind::Bias);
        self.push(Layer::Linear(Linear {
            in_features,
            out_features,
            weight,
            bias,
        }))
    }

    /// Appends `relu(branch(x) + shortcut(x))`. An empty shortcut is the
    /// identity.
    pub fn residual(
        &mut self,
        branch: impl FnOnce(&mut ArchBuilder),
        shortcut: impl FnOnce(&mut ArchBuilder),
    ) -> &mut Self {
        if self.error.is_some() {
            return self;
        }
        let start = self.shape;
        let outer_layers = std::mem::take(&mut self.layers);
        let outer_prefix = self.prefix.clone();
        let block = outer_layers.len();

        self.prefix = format!("{outer_prefix}{block}.branch.");
        branch(self);
        let branch_layers = std::mem::take(&mut self.layers);

        self.shape = start;
        self.prefix = format!("{outer_prefix}{block}.shortcut.");
        shortcut(self);
        let shortcut_layers = std::mem::replace(&mut self.layers, outer_layers);

        self.prefix = outer_prefix;
        self.shape = start;
        self.push(Layer::Residual(Residual {
            branch: branch_layers,
            shortcut: shortcut_layers,
        }))
    }

    pub fn finish(self) -> Result<Architecture> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let n_classes = match self.shape {
            [c, 1, 1] if matches!(self.layers.last(), Some(Layer::Linear(_))) => c,
            other => {
                return Err(Error::ShapeMismatch {
                    expected: "a network ending in a linear layer".into(),
                    actual: format!("output shape {other:?}"),
                })
            }
        };
        Ok(Architecture {
            label: self.label,
            input_shape: self.input_shape,
            n_classes,
            layers: self.layers,
            slots: self.slots,
        })
    }
}

fn basic_block(b: &mut ArchBuilder, out: usize, stride: usize) {
    let project = stride != 1 || b.shape()[0] != out;
    b.residual(
        |r| {
            r.conv(out, 3, stride, 1, false)
                .batch_norm()
                .relu()
                .conv(out, 3, 1, 1, false)
                .batch_norm();
        },
        |s| {
            if project {
                s.conv(out, 1, stride, 0, false).batch_norm();
            }
        },
    );
}

fn resnet(spec: &ModelSpec, blocks: &[usize; 4]) -> Result<Architecture> {
    let label = match spec.name {
        ModelName::Resnet34 => "resnet34",
        _ => "resnet18",
    };
    let mut b = ArchBuilder::new(label, [3, spec.input_size, spec.input_size]);
    b.conv(spec.channels(64), 7, 2, 3, false)
        .batch_norm()
        .relu()
        .max_pool(3, 2, 1);
    for (stage, (&n, base)) in blocks.iter().zip([64, 128, 256, 512]).enumerate() {
        for i in 0..n {
            let stride = if stage > 0 && i == 0 { 2 } else { 1 };
            basic_block(&mut b, spec.channels(base), stride);
        }
    }
    b.global_avg_pool().flatten().linear(spec.n_classes);
    b.finish()
}

fn vgg16(spec: &ModelSpec) -> Result<Architecture> {
    let mut b = ArchBuilder::new("vgg16", [3, spec.input_size, spec.input_size]);
    for (n, base) in [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)] {
        for _ in 0..n {
            b.conv(spec.channels(base), 3, 1, 1, true).relu();
        }
        b.max_pool(2, 2, 0);
    }
    b.flatten()
        .linear(spec.channels(4096))
        .relu()
        .linear(spec.channels(4096))
        .relu()
        .linear(spec.n_classes);
    b.finish()
}

fn reduced_test_net(spec: &ModelSpec) -> Result<Architecture> {
    let mut b = ArchBuilder::new("reduced_test_net", [3, spec.input_size, spec.input_size]);
    b.conv(spec.channels(64), 3, 1, 1, false)
        .batch_norm()
        .relu()
        .max_pool(2, 2, 0);
    for (base, stride) in [(64, 1), (128, 2), (256, 2)] {
        basic_block(&mut b, spec.channels(base), stride);
    }
    b.global_avg_pool().flatten().linear(spec.n_classes);
    b.finish()
}
