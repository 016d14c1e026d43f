//! Convolutional classifiers (VGG-16, ResNet-18/34 and a reduced residual
//! net), forward inference with a softmax head, backpropagation, and
//! parameter/FLOP accounting.

mod arch;
mod layers;
mod network;
mod tensor;

pub use arch::{ArchBuilder, Architecture, ModelName, ModelSpec, Slot, SlotKind};
pub use layers::{BatchNorm2d, Conv2d, Layer, Linear, MaxPool2d, Residual, BN_EPS};
pub use network::{BatchStats, CostReport, Gradients, Network, Tape, BN_MOMENTUM};
pub use tensor::{argmax, softmax, softmax_row, Matrix, Tensor};
