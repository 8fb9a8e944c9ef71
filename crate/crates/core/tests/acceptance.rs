//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.
//!
//! Run a subset by passing substrings of criterion names:
//! `cargo test --release --test acceptance -- merged ood`.

mod common;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfclass::cnn::{self, checkpoint, Model, Optimizer, OptimizerKind};
use rfclass::dataset::{
    self, builtin_profiles, out_of_library_profile, CorpusConfig, DatasetManifest, ImageSize, Renderer, SampleKind,
    Split,
};
use rfclass::eval::{self, TrainSetup};
use rfclass::signal::{self, TimeSeriesSignal};
use rfclass::spectro::{self, WindowKind, WindowSpec};

const PER_CLASS: usize = 100;
const NATIVE_SNRS: [f64; 8] = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 30.0];
const INTERMEDIATE_SNRS: [f64; 8] = [-12.0, -7.0, -2.0, 3.0, 8.0, 13.0, 18.0, 22.0];
const MERGED_CUTOFF: f64 = -10.0;
const SWEEP_CUTOFFS: [Option<f64>; 6] = [None, Some(-30.0), Some(-20.0), Some(-15.0), Some(-12.0), Some(-10.0)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn work_dir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn setup() -> TrainSetup {
    let mut s = TrainSetup::default().with_optimizer(OptimizerKind::Adam, 8);
    s.train.epochs = 15;
    s
}

fn base_config() -> CorpusConfig {
    CorpusConfig {
        spectrogram_size: ImageSize::new(96, 32),
        timeseries_size: Some(ImageSize::new(64, 64)),
        per_class: PER_CLASS,
        ..CorpusConfig::default()
    }
}

fn fresh_corpus(name: &str, config: &CorpusConfig) -> (PathBuf, DatasetManifest) {
    let dir = work_dir().join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    let t = Instant::now();
    let manifest = dataset::build_corpus(&builtin_profiles(), config, &dir).unwrap();
    eprintln!("  built corpus {name}: {} images in {:.0} s", manifest.entries.len(), t.elapsed().as_secs_f64());
    (dir, manifest)
}

/// All SNR levels at the merged cut-off, with time-series images.
fn main_corpus() -> &'static (PathBuf, DatasetManifest) {
    static C: OnceLock<(PathBuf, DatasetManifest)> = OnceLock::new();
    C.get_or_init(|| {
        let config = CorpusConfig {
            snr_grid: NATIVE_SNRS.to_vec(),
            cutoff_grid: vec![Some(MERGED_CUTOFF)],
            ..base_config()
        };
        fresh_corpus("main", &config)
    })
}

struct Merged {
    model: Model,
    setup: TrainSetup,
    test_accuracy: f64,
    in_probabilities: Vec<Vec<f64>>,
}

fn merged_model() -> &'static Merged {
    static M: OnceLock<Merged> = OnceLock::new();
    M.get_or_init(|| {
        let (root, manifest) = main_corpus();
        let merged = dataset::merge_snr_sets(manifest, &NATIVE_SNRS, Some(MERGED_CUTOFF)).unwrap();
        let (train, test) = eval::load_split_sets(&merged, root).unwrap();
        let setup = setup();
        let t = Instant::now();
        let run = setup.fit_and_evaluate(&train, &test).unwrap();
        eprintln!("  trained merged model on {} images in {:.0} s", train.len(), t.elapsed().as_secs_f64());
        Merged {
            in_probabilities: cnn::predict_all(&run.model, &test).unwrap(),
            model: run.model,
            setup,
            test_accuracy: run.accuracy,
        }
    })
}

fn snr_round_trip() -> Outcome {
    let targets = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0];
    let profiles = builtin_profiles();
    let duration = 131_072.0 / 1e6;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for &target in &targets {
        let mut sum = 0.0;
        for seed in 0..10u64 {
            let p = &profiles[seed as usize % profiles.len()];
            let (clean, marks) = dataset::synth_signal(p, duration, 1e6, 1.0, seed).unwrap();
            let noisy = signal::add_noise_to_snr(&clean, marks, target, 1000 + seed).unwrap();
            sum += signal::measure_snr(&noisy, marks).unwrap().gamma_db;
        }
        let err = sum / 10.0 - target;
        worst = worst.max(err.abs());
        parts.push(format!("{target}:{err:+.3}"));
    }
    outcome(worst <= 0.5, format!("max |mean error| {worst:.3} dB ({})", parts.join(" ")))
}

fn spectral_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    let mut exact = true;
    for m in [16usize, 128] {
        let spec = WindowSpec::new(m, m, WindowKind::Hanning);
        let window = spectro::make_window(&spec).unwrap();
        for _ in 0..100 {
            let block: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = spectro::block_periodogram(&block, &window, 1e6).unwrap();
            let slow = common::naive_periodogram(&block, &window, 1e6);
            for (a, b) in fast.iter().zip(&slow) {
                worst = worst.max((a - b).abs() / b.abs());
            }
            let doubled = TimeSeriesSignal::new([block.clone(), block.clone()].concat(), 1e6).unwrap();
            let welch = spectro::welch_psd(&doubled, &spec).unwrap();
            let single: Vec<f64> = fast.iter().map(|&v| spectro::density_to_db(v)).collect();
            exact &= welch.values == single;
        }
    }
    outcome(
        worst < 1e-9 && exact,
        format!("max relative error {worst:.2e}, duplicated-block Welch exact: {exact}"),
    )
}

fn gradient_check() -> Outcome {
    let mut worst = common::max_relative_error(common::toy_model(), 1);
    let mut names = vec![format!("toy {worst:.1e}")];
    for (name, spec) in common::isolated_layer_models() {
        let e = common::max_relative_error(spec, 7);
        names.push(format!("{name} {e:.1e}"));
        worst = worst.max(e);
    }
    outcome(worst < 1e-4, format!("max relative error {worst:.2e} ({})", names.join(", ")))
}

fn truncation_trend() -> Outcome {
    let config = CorpusConfig {
        snr_grid: vec![-10.0],
        cutoff_grid: SWEEP_CUTOFFS.to_vec(),
        timeseries_size: None,
        ..base_config()
    };
    let (root, manifest) = fresh_corpus("cutoff", &config);
    let sweep = eval::cutoff_sweep(&manifest, &root, -10.0, &SWEEP_CUTOFFS, &setup(), 1).unwrap();
    let none = sweep.accuracy_at(None).unwrap();
    let best = sweep.best().unwrap();
    let curve: Vec<String> = sweep
        .points
        .iter()
        .map(|p| format!("{}:{:.3}", p.value.map_or("none".into(), |v| v.to_string()), p.accuracy))
        .collect();
    outcome(
        none <= 2.0 / 15.0 && best.accuracy >= 0.85,
        format!(
            "no truncation {none:.3} (need <= 0.133), best {:.3} at {:?} (need >= 0.85); curve {}",
            best.accuracy,
            best.value,
            curve.join(" ")
        ),
    )
}

fn spectrogram_beats_timeseries() -> Outcome {
    let (root, manifest) = main_corpus();
    let s = setup();
    let spec_cell = manifest.cell(SampleKind::Spectrogram, 0.0, Some(MERGED_CUTOFF)).unwrap();
    let ts_cell = manifest.cell(SampleKind::Timeseries, 0.0, None).unwrap();
    let (tr, te) = eval::load_split_sets(&spec_cell, root).unwrap();
    let spec_acc = s.fit_and_evaluate(&tr, &te).unwrap().accuracy;
    let (tr, te) = eval::load_split_sets(&ts_cell, root).unwrap();
    let ts_acc = s.fit_and_evaluate(&tr, &te).unwrap().accuracy;
    let gap = spec_acc - ts_acc;
    outcome(
        gap >= 0.20,
        format!("spectrogram {spec_acc:.3}, time-series {ts_acc:.3}, gap {:.1} points", gap * 100.0),
    )
}

fn merged() -> Outcome {
    let m = merged_model();
    let config = CorpusConfig {
        snr_grid: INTERMEDIATE_SNRS.to_vec(),
        cutoff_grid: vec![Some(MERGED_CUTOFF)],
        timeseries_size: None,
        per_class: 20,
        seed: 1,
        ..base_config()
    };
    let (root, manifest) = fresh_corpus("intermediate", &config);
    let by_snr = eval::accuracy_by_snr(&m.model, &manifest, &root, &m.setup).unwrap();
    let lowest = INTERMEDIATE_SNRS[0];
    let within = by_snr
        .points
        .iter()
        .filter(|p| p.value != Some(lowest))
        .all(|p| (p.accuracy - m.test_accuracy).abs() <= 0.05);
    let levels: Vec<String> = by_snr
        .points
        .iter()
        .map(|p| format!("{}:{:.3}", p.value.unwrap(), p.accuracy))
        .collect();
    outcome(
        m.test_accuracy >= 0.90 && within,
        format!(
            "mixed-SNR test {:.3} (need >= 0.90); intermediate levels {} (need within 0.05 except {lowest} dB)",
            m.test_accuracy,
            levels.join(" ")
        ),
    )
}

fn size_sweep() -> Outcome {
    let (root, manifest) = main_corpus();
    let cell = manifest.cell(SampleKind::Spectrogram, 30.0, Some(MERGED_CUTOFF)).unwrap();
    let (train, test) = eval::load_split_sets(&cell, root).unwrap();
    let sizes = [10, 20, 50, 75];
    let sweep = eval::size_sweep(&train, &test, &sizes, Some(25), &setup(), 1).unwrap();
    let at = |n: usize| sweep.accuracy_at(Some(n as f64)).unwrap();
    let curve: Vec<String> = sizes.iter().map(|&n| format!("{n}:{:.3}", at(n))).collect();
    outcome(
        (at(50) - at(75)).abs() <= 0.05,
        format!("accuracy by samples/class {}", curve.join(" ")),
    )
}

fn ood_separation() -> Outcome {
    let m = merged_model();
    let (_, manifest) = main_corpus();
    let config = CorpusConfig {
        snr_grid: NATIVE_SNRS.to_vec(),
        cutoff_grid: vec![Some(MERGED_CUTOFF)],
        ..base_config()
    };
    let renderer = Renderer::new(&config, &builtin_profiles()).unwrap();
    let unknown = out_of_library_profile();
    let samples = dataset::spectrogram_samples(&renderer, &unknown, &NATIVE_SNRS, Some(MERGED_CUTOFF), 40, 99).unwrap();
    let out: Vec<Vec<f64>> = samples.iter().map(|x| m.model.probabilities(x).unwrap()).collect();
    let report = eval::ood_analysis(&m.in_probabilities, &out).unwrap();
    let _ = manifest;
    outcome(
        report.auc >= 0.9 && report.in_median < 0.1,
        format!(
            "AUC {:.3} (need >= 0.9), in-library median {:.4} (need < 0.1), out-of-library median {:.3}, threshold {:.3}",
            report.auc, report.in_median, report.out_median, report.threshold
        ),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let config = CorpusConfig {
        snr_grid: vec![0.0, 30.0],
        cutoff_grid: vec![None, Some(-10.0)],
        per_class: 4,
        spectrogram_size: ImageSize::new(48, 24),
        timeseries_size: Some(ImageSize::new(32, 32)),
        ..CorpusConfig::default()
    };
    let profiles = &builtin_profiles()[..3];
    let mut artifacts = Vec::new();
    for run in 0..2 {
        let dir = work_dir().join(format!("determinism{run}"));
        if dir.exists() {
            std::fs::remove_dir_all(&dir).unwrap();
        }
        let manifest = dataset::build_corpus(profiles, &config, &dir).unwrap();
        let cell = manifest.cell(SampleKind::Spectrogram, 0.0, Some(-10.0)).unwrap();
        let (train, test) = eval::load_split_sets(&cell, &dir).unwrap();
        let mut s = TrainSetup::default();
        s.train.epochs = 3;
        s.train.batch_size = 2;
        let mut model = Model::init(s.model_spec(train.shape(), train.classes()), s.init_seed).unwrap();
        let history = cnn::train(&mut model, &train, &s.train, &mut Optimizer::new(s.optimizer)).unwrap();
        checkpoint::save(&model, &dir.join("model.rfnn")).unwrap();
        std::fs::write(dir.join("history.json"), serde_json::to_vec(&history).unwrap()).unwrap();
        let (_, cm) = eval::evaluate(&model, &test).unwrap();
        let mut csv = Vec::new();
        cm.write_csv(&mut csv).unwrap();
        std::fs::write(dir.join("confusion.csv"), csv).unwrap();
        let sweep = eval::size_sweep(&train, &test, &[1, 3], None, &s, 1).unwrap();
        let mut csv = Vec::new();
        sweep.write_csv(&mut csv).unwrap();
        std::fs::write(dir.join("sweep.csv"), csv).unwrap();
        let probs = cnn::predict_all(&model, &test).unwrap();
        let report = eval::ood_analysis(&probs[..2], &probs[2..]).unwrap();
        std::fs::write(dir.join("ood.json"), serde_json::to_vec_pretty(&report).unwrap()).unwrap();
        let _ = manifest.split(Split::Train);
        artifacts.push(dir_bytes(&dir));
    }
    let same = artifacts[0] == artifacts[1];
    outcome(same, format!("{} artifacts compared byte for byte, identical: {same}", artifacts[0].len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("snr_round_trip", snr_round_trip),
        ("spectral_oracle", spectral_oracle),
        ("gradient_check", gradient_check),
        ("truncation_rescues_low_snr", truncation_trend),
        ("spectrogram_beats_timeseries", spectrogram_beats_timeseries),
        ("merged_model", merged),
        ("size_sweep", size_sweep),
        ("ood_separation", ood_separation),
        ("determinism", determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{verdict} {name} [{:.1} s]: {}", t.elapsed().as_secs_f64(), o.detail);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
