//! Convolutional network with hand-written backpropagation.
//!
//! Samples are `channels × height × width` blocks of `f64`; batches are
//! `[n, c·h·w]` tensors. Layers are valid-padded convolutions, max pooling,
//! ReLU, flatten, dense, and a final dense layer with softmax.

pub mod checkpoint;
mod loss;
mod model;
mod optim;
mod spec;
mod tensor;
mod train;

pub use loss::{argmax, cross_entropy_row, loss, one_hot, softmax, uncertainty};
pub use model::Model;
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use spec::{LayerSpec, ModelSpec, Shape3};
pub use tensor::Tensor;
pub use train::{predict, predict_all, train, EpochStats, History, ImageSet, TrainConfig};

use crate::error::Result;

/// Softmax probabilities for a batch.
pub fn forward(model: &Model, batch: &Tensor) -> Result<Tensor> {
    model.forward(batch)
}

/// Batch-mean gradients of the clamped cross-entropy, one tensor per
/// parameter tensor of `model`.
pub fn backward(model: &Model, batch: &Tensor, labels: &Tensor, epsilon: f64) -> Result<Vec<Tensor>> {
    model.gradients(batch, labels, epsilon).map(|(_, g)| g)
}
