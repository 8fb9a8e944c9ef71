mod common;

use rfclass::cnn::{
    self, checkpoint, ImageSet, LayerSpec, Model, ModelSpec, Optimizer, OptimizerConfig, OptimizerKind, Shape3, Tensor,
    TrainConfig,
};

fn dark_bright(per_class: usize) -> ImageSet {
    let shape = Shape3::new(1, 16, 16);
    let mut set = ImageSet::new(shape, 2);
    for i in 0..per_class {
        let dark = 0.05 + 0.005 * i as f64;
        set.push(&vec![dark; 256], 0).unwrap();
        set.push(&vec![1.0 - dark; 256], 1).unwrap();
    }
    set
}

fn small_spec() -> ModelSpec {
    ModelSpec {
        input: Shape3::new(1, 16, 16),
        layers: vec![
            common::conv(4, 3, 1),
            LayerSpec::Relu,
            LayerSpec::MaxPool { pool_h: 2, pool_w: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 8 },
            LayerSpec::Relu,
            LayerSpec::SoftmaxOutput { classes: 2 },
        ],
    }
}

fn sgd_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        epochs,
        seed: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_toy_set_is_learned_with_sgd() {
    let set = dark_bright(20);
    let mut model = Model::init(small_spec(), 2).unwrap();
    let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Sgd).with_learning_rate(0.01));
    let history = cnn::train(&mut model, &set, &sgd_config(20), &mut opt).unwrap();

    let probs = cnn::predict_all(&model, &set).unwrap();
    let correct = probs
        .iter()
        .zip(set.labels())
        .filter(|(p, &l)| cnn::argmax(p) == l)
        .count();
    assert_eq!(correct, set.len());

    let drops = history.windows(2).filter(|w| w[1].loss <= w[0].loss).count();
    assert!(drops * 10 >= (history.len() - 1) * 9, "{history:?}");
}

#[test]
fn same_seed_trains_bit_identically() {
    let set = dark_bright(10);
    let run = || {
        let mut model = Model::init(small_spec(), 9).unwrap();
        let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Adam));
        let h = cnn::train(&mut model, &set, &sgd_config(4), &mut opt).unwrap();
        (h, checkpoint::encode(&model))
    };
    let (h1, c1) = run();
    let (h2, c2) = run();
    assert_eq!(h1, h2);
    assert_eq!(c1, c2);
    assert_eq!(checkpoint::checksum(&c1), checkpoint::checksum(&c2));
}

#[test]
fn one_full_batch_epoch_is_one_step() {
    let set = dark_bright(5);
    let mut model = Model::init(small_spec(), 0).unwrap();
    let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Nadam));
    let cfg = TrainConfig {
        batch_size: set.len(),
        epochs: 1,
        ..TrainConfig::default()
    };
    cnn::train(&mut model, &set, &cfg, &mut opt).unwrap();
    assert_eq!(opt.steps(), 1);
}

#[test]
fn zero_image_gives_zero_conv_gradients() {
    let model = Model::init(common::toy_model(), 4).unwrap();
    let n = model.input_shape().len();
    let x = Tensor::zeros(vec![2, n]);
    let y = Tensor::new(vec![2, 3], [cnn::one_hot(0, 3), cnn::one_hot(2, 3)].concat()).unwrap();
    let grads = cnn::backward(&model, &x, &y, common::LOSS_EPS).unwrap();
    let conv_layers = model.spec().layers.iter().filter(|l| matches!(l, LayerSpec::Conv { .. })).count();
    for g in grads.iter().take(2 * conv_layers) {
        assert!(g.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn zero_final_layer_predicts_uniform() {
    let mut model = Model::init(common::toy_model(), 4).unwrap();
    let k = model.params().len();
    for p in &mut model.params_mut()[k - 2..] {
        p.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let x: Vec<f64> = (0..model.input_shape().len()).map(|i| (i % 7) as f64).collect();
    let p = model.probabilities(&x).unwrap();
    for v in p {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn prediction_ignores_uniform_output_bias_shift() {
    let mut model = Model::init(common::toy_model(), 8).unwrap();
    let x: Vec<f64> = (0..model.input_shape().len()).map(|i| ((i * 13) % 17) as f64 * 0.1).collect();
    let (class, before) = cnn::predict(&model, &x).unwrap();
    let last = model.params().len() - 1;
    model.params_mut()[last].data_mut().iter_mut().for_each(|b| *b += 3.5);
    let (shifted, after) = cnn::predict(&model, &x).unwrap();
    assert_eq!(class, shifted);
    for (a, b) in before.iter().zip(&after) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let model = Model::init(common::toy_model(), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.rfnn");
    checkpoint::save(&model, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    let x: Vec<f64> = (0..model.input_shape().len()).map(|i| i as f64 * 0.01).collect();
    assert_eq!(model.probabilities(&x).unwrap(), back.probabilities(&x).unwrap());
}
