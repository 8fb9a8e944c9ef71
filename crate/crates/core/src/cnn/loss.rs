use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Numerically stable softmax of one logit row, written into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(logits) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

/// Categorical cross-entropy `−Σ y·log(max(p, ε))` of one row.
pub fn cross_entropy_row(probs: &[f64], target: &[f64], epsilon: f64) -> f64 {
    probs
        .iter()
        .zip(target)
        .filter(|(_, &y)| y != 0.0)
        .map(|(&p, &y)| -y * p.max(epsilon).ln())
        .sum()
}

/// Batch mean of the clamped categorical cross-entropy.
pub fn loss(probabilities: &Tensor, labels: &Tensor, epsilon: f64) -> Result<f64> {
    if probabilities.shape() != labels.shape() || probabilities.shape().len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "probabilities {:?} vs labels {:?}",
            probabilities.shape(),
            labels.shape()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArg("loss epsilon must be positive".into()));
    }
    let rows = probabilities.outer();
    let total: f64 = (0..rows)
        .map(|i| cross_entropy_row(probabilities.item(i), labels.item(i), epsilon))
        .sum();
    Ok(total / rows as f64)
}

/// Gradient of the clamped cross-entropy of one row w.r.t. the logits.
///
/// Terms whose probability is at or below `epsilon` are constant in the
/// clamped loss and contribute nothing.
pub(crate) fn logit_gradient(probs: &[f64], target: &[f64], epsilon: f64, out: &mut [f64]) {
    let mut active = 0.0;
    for (&p, &y) in probs.iter().zip(target) {
        if y != 0.0 && p > epsilon {
            active += y;
        }
    }
    for ((o, &p), &y) in out.iter_mut().zip(probs).zip(target) {
        let a = if y != 0.0 && p > epsilon { y } else { 0.0 };
        *o = p * active - a;
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `1 − max p`.
pub fn uncertainty(probabilities: &[f64]) -> f64 {
    1.0 - probabilities.iter().copied().fold(0.0, f64::max)
}

pub fn one_hot(class: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[class] = 1.0;
    v
}
