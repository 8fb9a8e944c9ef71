use std::path::Path;
use std::sync::OnceLock;

use rfclass::cnn::{OptimizerKind, TrainConfig};
use rfclass::dataset::{self, builtin_profiles, CorpusConfig, DatasetManifest, ImageSize, SampleKind};
use rfclass::eval::{self, TrainSetup};

const SNR: f64 = 30.0;
const ABOVE_CEILING: f64 = 10.0;

struct Corpus {
    dir: tempfile::TempDir,
    manifest: DatasetManifest,
}

fn corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CorpusConfig {
            spectrogram_size: ImageSize::new(48, 24),
            timeseries_size: None,
            snr_grid: vec![SNR],
            cutoff_grid: vec![None, Some(-40.0), Some(-30.0), Some(ABOVE_CEILING)],
            per_class: 24,
            seed: 5,
            ..CorpusConfig::default()
        };
        let manifest = dataset::build_corpus(&builtin_profiles(), &cfg, dir.path()).unwrap();
        Corpus { dir, manifest }
    })
}

fn root() -> &'static Path {
    corpus().dir.path()
}

fn setup() -> TrainSetup {
    TrainSetup {
        train: TrainConfig {
            batch_size: 8,
            epochs: 12,
            seed: 2,
            ..TrainConfig::default()
        },
        ..TrainSetup::default()
    }
}

fn cell(cutoff: Option<f64>) -> DatasetManifest {
    corpus().manifest.cell(SampleKind::Spectrogram, SNR, cutoff).unwrap()
}

#[test]
fn cutoff_above_ceiling_gives_chance() {
    let (train, test) = eval::load_split_sets(&cell(Some(ABOVE_CEILING)), root()).unwrap();
    let first = test.sample(0).to_vec();
    assert!((0..test.len()).all(|i| test.sample(i) == first.as_slice()));
    let acc = setup().fit_and_evaluate(&train, &test).unwrap().accuracy;
    let chance = 1.0 / 15.0;
    assert!((acc - chance).abs() <= 1.0 / test.len() as f64 + 1e-12, "{acc}");
}

#[test]
fn cutoffs_below_the_signal_barely_matter() {
    let r = eval::cutoff_sweep(&corpus().manifest, root(), SNR, &[None, Some(-40.0), Some(-30.0)], &setup(), 1).unwrap();
    let acc: Vec<f64> = r.points.iter().map(|p| p.accuracy).collect();
    let spread = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - acc.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.1, "{acc:?}");
    assert!(acc[0] > 0.8, "{acc:?}");
}

#[test]
fn one_by_one_grid_is_a_single_run() {
    let (train, test) = eval::load_split_sets(&cell(None), root()).unwrap();
    let base = setup();
    let g = eval::grid_search(&train, &test, &[OptimizerKind::Nadam], &[4], &base, 1).unwrap();
    assert_eq!(g.table.len(), 1);
    assert_eq!(g.best, g.table[0]);
    let direct = base.with_optimizer(OptimizerKind::Nadam, 4).fit_and_evaluate(&train, &test).unwrap();
    assert_eq!(g.best.accuracy, direct.accuracy);
}

#[test]
fn full_size_sweep_reproduces_baseline() {
    let (train, test) = eval::load_split_sets(&cell(Some(-40.0)), root()).unwrap();
    let per_class = dataset::train_count(24);
    let s = setup();
    let sweep = eval::size_sweep(&train, &test, &[per_class], None, &s, 1).unwrap();
    let baseline = s.fit_and_evaluate(&train, &test).unwrap().accuracy;
    assert_eq!(sweep.points[0].accuracy, baseline);
    assert!(eval::size_sweep(&train, &test, &[per_class + 1], None, &s, 1).is_err());
}

#[test]
fn parallel_sweep_matches_serial() {
    let cutoffs = [Some(-40.0), Some(ABOVE_CEILING)];
    let mut s = setup();
    s.train.epochs = 3;
    let a = eval::cutoff_sweep(&corpus().manifest, root(), SNR, &cutoffs, &s, 1).unwrap();
    let b = eval::cutoff_sweep(&corpus().manifest, root(), SNR, &cutoffs, &s, 2).unwrap();
    assert_eq!(a, b);
}
