#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfclass::cnn::{self, LayerSpec, Model, ModelSpec, Shape3, Tensor};

/// One-sided density periodogram by direct O(M²) summation.
pub fn naive_periodogram(block: &[f64], window: &[f64], fs: f64) -> Vec<f64> {
    let m = block.len();
    let power: f64 = window.iter().map(|w| w * w).sum();
    (0..=m / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, (&x, &w)) in block.iter().zip(window).enumerate() {
                let phase = -2.0 * std::f64::consts::PI * (k * n) as f64 / m as f64;
                re += w * x * phase.cos();
                im += w * x * phase.sin();
            }
            let p = (re * re + im * im) / (fs * power);
            if k == 0 || 2 * k == m {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

pub const FD_STEP: f64 = 1e-5;
pub const LOSS_EPS: f64 = 1e-12;

fn batch(shape: Shape3, rows: usize, classes: usize, seed: u64) -> (Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..rows * shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..rows).flat_map(|i| cnn::one_hot(i % classes, classes)).collect();
    (
        Tensor::new(vec![rows, shape.len()], x).unwrap(),
        Tensor::new(vec![rows, classes], y).unwrap(),
    )
}

fn loss_at(model: &Model, x: &Tensor, y: &Tensor) -> f64 {
    cnn::loss(&cnn::forward(model, x).unwrap(), y, LOSS_EPS).unwrap()
}

/// Worst relative error between analytic and central-difference gradients
/// over every parameter of a freshly initialized model.
pub fn max_relative_error(spec: ModelSpec, seed: u64) -> f64 {
    let classes = spec.num_classes();
    let shape = spec.input;
    let mut model = Model::init(spec, seed).unwrap();
    // Non-zero biases so ReLU and pool paths see varied pre-activations.
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for p in model.params_mut() {
        if p.shape().len() == 1 {
            p.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
    let (x, y) = batch(shape, 3, classes, seed);
    let analytic = cnn::backward(&model, &x, &y, LOSS_EPS).unwrap();

    let mut worst = 0.0f64;
    for t in 0..model.params().len() {
        for j in 0..model.params()[t].len() {
            let orig = model.params()[t].data()[j];
            model.params_mut()[t].data_mut()[j] = orig + FD_STEP;
            let up = loss_at(&model, &x, &y);
            model.params_mut()[t].data_mut()[j] = orig - FD_STEP;
            let down = loss_at(&model, &x, &y);
            model.params_mut()[t].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[t].data()[j];
            let denom = a.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

pub fn conv(filters: usize, k: usize, stride: usize) -> LayerSpec {
    LayerSpec::Conv {
        filters,
        kernel_h: k,
        kernel_w: k,
        stride,
    }
}

/// Two conv/ReLU stages, a pool and a dense layer on an 8×8×2 input.
pub fn toy_model() -> ModelSpec {
    ModelSpec {
        input: Shape3::new(2, 8, 8),
        layers: vec![
            conv(3, 3, 1),
            LayerSpec::Relu,
            conv(4, 3, 1),
            LayerSpec::Relu,
            LayerSpec::MaxPool { pool_h: 2, pool_w: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 6 },
            LayerSpec::Relu,
            LayerSpec::SoftmaxOutput { classes: 3 },
        ],
    }
}

/// One small model per layer type, each isolating that layer.
pub fn isolated_layer_models() -> Vec<(&'static str, ModelSpec)> {
    let input = Shape3::new(2, 8, 8);
    let out = LayerSpec::SoftmaxOutput { classes: 3 };
    let cases: Vec<(&str, Vec<LayerSpec>)> = vec![
        ("softmax", vec![LayerSpec::Flatten, out]),
        ("dense", vec![LayerSpec::Flatten, LayerSpec::Dense { units: 5 }, out]),
        ("conv", vec![conv(3, 3, 1), LayerSpec::Flatten, out]),
        ("strided conv", vec![conv(3, 3, 2), LayerSpec::Flatten, out]),
        (
            "rectangular kernel",
            vec![
                LayerSpec::Conv {
                    filters: 2,
                    kernel_h: 2,
                    kernel_w: 3,
                    stride: 1,
                },
                LayerSpec::Flatten,
                out,
            ],
        ),
        ("relu", vec![conv(3, 3, 1), LayerSpec::Relu, LayerSpec::Flatten, out]),
        (
            "pool",
            vec![
                conv(3, 3, 1),
                LayerSpec::MaxPool { pool_h: 2, pool_w: 3 },
                LayerSpec::Flatten,
                out,
            ],
        ),
    ];
    cases
        .into_iter()
        .map(|(name, layers)| (name, ModelSpec { input, layers }))
        .collect()
}
