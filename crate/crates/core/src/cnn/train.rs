use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::loss::{argmax, one_hot};
use super::model::{Model, Workspace};
use super::optim::Optimizer;
use super::spec::Shape3;
use super::tensor::Tensor;

/// Labeled samples stored contiguously, one `shape`-sized block each.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    shape: Shape3,
    classes: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
}

impl ImageSet {
    pub fn new(shape: Shape3, classes: usize) -> Self {
        Self {
            shape,
            classes,
            data: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, sample: &[f64], label: usize) -> Result<()> {
        if sample.len() != self.shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "sample has {} values, set holds {:?}",
                sample.len(),
                self.shape
            )));
        }
        if label >= self.classes {
            return Err(Error::InvalidArg(format!(
                "label {label} outside 0..{}",
                self.classes
            )));
        }
        self.data.extend_from_slice(sample);
        self.labels.push(label);
        Ok(())
    }

    pub fn extend(&mut self, other: &ImageSet) -> Result<()> {
        if other.shape != self.shape || other.classes != self.classes {
            return Err(Error::ShapeMismatch("image sets differ in shape or classes".into()));
        }
        self.data.extend_from_slice(&other.data);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.shape.len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> ImageSet {
        let mut out = ImageSet::new(self.shape, self.classes);
        for &i in indices {
            out.data.extend_from_slice(self.sample(i));
            out.labels.push(self.labels[i]);
        }
        out
    }

    /// All samples as a `[n, c·h·w]` tensor and one-hot labels.
    pub fn to_tensors(&self) -> Result<(Tensor, Tensor)> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let x = Tensor::new(vec![self.len(), self.shape.len()], self.data.clone())?;
        let y: Vec<f64> = self.labels.iter().flat_map(|&l| one_hot(l, self.classes)).collect();
        Ok((x, Tensor::new(vec![self.len(), self.classes], y)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Probabilities are clamped to at least this inside the log.
    pub loss_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            epochs: 30,
            seed: 0,
            shuffle: true,
            loss_epsilon: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    /// Fraction of training samples classified correctly before each
    /// sample's batch update.
    pub accuracy: f64,
}

pub type History = Vec<EpochStats>;

/// Mini-batch training. Deterministic for a given model, data order,
/// config and optimizer state.
pub fn train(
    model: &mut Model,
    train_set: &ImageSet,
    config: &TrainConfig,
    optimizer: &mut Optimizer,
) -> Result<History> {
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::InvalidArg("batch size and epochs must be positive".into()));
    }
    if train_set.shape() != model.input_shape() || train_set.classes() != model.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "training data {:?}/{} classes vs model {:?}/{} classes",
            train_set.shape(),
            train_set.classes(),
            model.input_shape(),
            model.num_classes()
        )));
    }
    let k = model.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grads: Vec<Tensor> = model.params().iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut ws = Workspace::new(model);

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
            for &i in batch {
                let target = one_hot(train_set.label(i), k);
                loss_sum += ws.accumulate(model, train_set.sample(i), &target, config.loss_epsilon, &mut grads);
                if argmax(ws.probs()) == train_set.label(i) {
                    correct += 1;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            optimizer.step(model.params_mut(), &grads)?;
        }
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::DomainError(format!("weights diverged in epoch {epoch}")));
        }
        let n = train_set.len() as f64;
        history.push(EpochStats {
            epoch,
            loss: loss_sum / n,
            accuracy: correct as f64 / n,
        });
        log::debug!(
            "epoch {epoch}: loss {:.4} acc {:.3}",
            loss_sum / n,
            correct as f64 / n
        );
    }
    Ok(history)
}

/// Most probable class (lowest index on ties) and the probabilities.
pub fn predict(model: &Model, image: &[f64]) -> Result<(usize, Vec<f64>)> {
    let p = model.probabilities(image)?;
    Ok((argmax(&p), p))
}

/// Probabilities for every sample of a set.
pub fn predict_all(model: &Model, set: &ImageSet) -> Result<Vec<Vec<f64>>> {
    (0..set.len()).map(|i| model.probabilities(set.sample(i))).collect()
}
