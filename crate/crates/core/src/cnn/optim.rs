//! First-order update rules with per-parameter accumulators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adagrad,
    RmsProp,
    Adam,
    Adamax,
    Nadam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 6] = [
        OptimizerKind::Sgd,
        OptimizerKind::Adagrad,
        OptimizerKind::RmsProp,
        OptimizerKind::Adam,
        OptimizerKind::Adamax,
        OptimizerKind::Nadam,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adamax => "adamax",
            OptimizerKind::Nadam => "nadam",
        }
    }

    pub fn default_learning_rate(&self) -> f64 {
        match self {
            OptimizerKind::Sgd | OptimizerKind::Adagrad => 0.01,
            _ => 0.001,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArg(format!("unknown optimizer {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// RMSProp decay.
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::new(OptimizerKind::Adam)
    }
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            learning_rate: kind.default_learning_rate(),
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.9,
            epsilon: 1e-8,
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    fn ensure_state(&mut self, weights: &[Tensor]) -> Result<()> {
        if self.first.is_empty() {
            self.first = weights.iter().map(|w| vec![0.0; w.len()]).collect();
            self.second = self.first.clone();
            return Ok(());
        }
        if self.first.len() != weights.len() || self.first.iter().zip(weights).any(|(a, w)| a.len() != w.len()) {
            return Err(Error::ShapeMismatch("optimizer state does not match weights".into()));
        }
        Ok(())
    }

    /// Applies one update to `weights` in place.
    pub fn step(&mut self, weights: &mut [Tensor], gradients: &[Tensor]) -> Result<()> {
        if weights.len() != gradients.len() || weights.iter().zip(gradients).any(|(w, g)| w.shape() != g.shape()) {
            return Err(Error::ShapeMismatch("gradients do not match weights".into()));
        }
        self.ensure_state(weights)?;
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lr = c.learning_rate;
        let (b1, b2, eps) = (c.beta1, c.beta2, c.epsilon);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);

        for (i, (w, g)) in weights.iter_mut().zip(gradients).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            let w = w.data_mut();
            let g = g.data();
            match c.kind {
                OptimizerKind::Sgd => {
                    for (wj, &gj) in w.iter_mut().zip(g) {
                        *wj -= lr * gj;
                    }
                }
                OptimizerKind::Adagrad => {
                    for j in 0..w.len() {
                        v[j] += g[j] * g[j];
                        w[j] -= lr * g[j] / (v[j] + eps).sqrt();
                    }
                }
                OptimizerKind::RmsProp => {
                    for j in 0..w.len() {
                        v[j] = c.rho * v[j] + (1.0 - c.rho) * g[j] * g[j];
                        w[j] -= lr * g[j] / (v[j].sqrt() + eps);
                    }
                }
                OptimizerKind::Adam => {
                    for j in 0..w.len() {
                        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                        w[j] -= lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
                    }
                }
                OptimizerKind::Adamax => {
                    for j in 0..w.len() {
                        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                        v[j] = (b2 * v[j]).max(g[j].abs());
                        w[j] -= lr / bc1 * m[j] / (v[j] + eps);
                    }
                }
                OptimizerKind::Nadam => {
                    // Nesterov look-ahead on the bias-corrected first moment.
                    let bc1_next = 1.0 - b1.powi(t + 1);
                    for j in 0..w.len() {
                        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                        let m_hat = b1 * m[j] / bc1_next + (1.0 - b1) * g[j] / bc1;
                        w[j] -= lr * m_hat / ((v[j] / bc2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
