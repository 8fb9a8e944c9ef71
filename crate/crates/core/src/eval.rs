//! Accuracy, confusion matrices, experiment sweeps and out-of-library
//! analysis.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cnn::{self, History, ImageSet, Model, ModelSpec, Optimizer, OptimizerConfig, OptimizerKind, Shape3, TrainConfig};
use crate::dataset::{DatasetManifest, SampleKind, Split};
use crate::error::{Error, Result};

/// Row = true class, column = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth * self.classes..(truth + 1) * self.classes].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "true\\predicted")?;
        for k in 0..self.classes {
            write!(w, ",{k}")?;
        }
        writeln!(w)?;
        for t in 0..self.classes {
            write!(w, "{t}")?;
            for p in 0..self.classes {
                write!(w, ",{}", self.get(t, p))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Accuracy and confusion matrix from true labels and probability rows.
pub fn score(labels: &[usize], probabilities: &[Vec<f64>], classes: usize) -> Result<(f64, ConfusionMatrix)> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if labels.len() != probabilities.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            actual: probabilities.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&y, p) in labels.iter().zip(probabilities) {
        if y >= classes || p.len() != classes {
            return Err(Error::ShapeMismatch(format!("label {y} or row of {} outside {classes} classes", p.len())));
        }
        cm.add(y, cnn::argmax(p));
    }
    Ok((cm.accuracy(), cm))
}

pub fn evaluate(model: &Model, test: &ImageSet) -> Result<(f64, ConfusionMatrix)> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if test.classes() != model.num_classes() || test.shape() != model.input_shape() {
        return Err(Error::ShapeMismatch(format!(
            "test data {:?}/{} classes vs model {:?}/{} classes",
            test.shape(),
            test.classes(),
            model.input_shape(),
            model.num_classes()
        )));
    }
    let probs = cnn::predict_all(model, test)?;
    score(test.labels(), &probs, model.num_classes())
}

/// Architecture, optimizer and training loop settings for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSetup {
    pub filters: [usize; 3],
    pub dense: usize,
    pub optimizer: OptimizerConfig,
    pub train: TrainConfig,
    /// Weight initialization seed.
    pub init_seed: u64,
}

impl Default for TrainSetup {
    fn default() -> Self {
        Self {
            filters: [8, 16, 32],
            dense: 64,
            optimizer: OptimizerConfig::new(OptimizerKind::Adam),
            train: TrainConfig::default(),
            init_seed: 0,
        }
    }
}

impl TrainSetup {
    pub fn model_spec(&self, input: Shape3, classes: usize) -> ModelSpec {
        ModelSpec::three_stage(input, self.filters, self.dense, classes)
    }

    pub fn with_optimizer(mut self, kind: OptimizerKind, batch_size: usize) -> Self {
        self.optimizer = OptimizerConfig::new(kind);
        self.train.batch_size = batch_size;
        self
    }

    pub fn fit(&self, train_set: &ImageSet) -> Result<(Model, History)> {
        let mut model = Model::init(self.model_spec(train_set.shape(), train_set.classes()), self.init_seed)?;
        let mut opt = Optimizer::new(self.optimizer);
        let history = cnn::train(&mut model, train_set, &self.train, &mut opt)?;
        Ok((model, history))
    }

    pub fn fit_and_evaluate(&self, train_set: &ImageSet, test: &ImageSet) -> Result<RunOutcome> {
        let (model, history) = self.fit(train_set)?;
        let (accuracy, confusion) = evaluate(&model, test)?;
        Ok(RunOutcome {
            model,
            history,
            accuracy,
            confusion,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: Model,
    pub history: History,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Maps `f` over `items` on up to `jobs` threads, keeping input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Cut-off in dB/Hz; a missing value is no truncation.
    Cutoff,
    /// Training samples per class.
    Size,
    SnrDb,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Cutoff => "cutoff_db",
            SweepAxis::Size => "samples_per_class",
            SweepAxis::SnrDb => "snr_db",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: Option<f64>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
}

impl SweepResult {
    fn new(axis: SweepAxis, setup: &TrainSetup, points: Vec<SweepPoint>) -> Self {
        Self {
            axis,
            points,
            seed: setup.train.seed,
            optimizer: setup.optimizer.kind,
            batch_size: setup.train.batch_size,
        }
    }

    pub fn accuracy_at(&self, value: Option<f64>) -> Option<f64> {
        self.points.iter().find(|p| p.value == value).map(|p| p.accuracy)
    }

    pub fn best(&self) -> Option<SweepPoint> {
        self.points
            .iter()
            .copied()
            .fold(None, |best: Option<SweepPoint>, p| match best {
                Some(b) if b.accuracy >= p.accuracy => Some(b),
                _ => Some(p),
            })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{},accuracy,seed,optimizer,batch_size", self.axis.name())?;
        for p in &self.points {
            let v = p.value.map_or_else(|| "none".to_string(), |v| format!("{v}"));
            writeln!(w, "{v},{:.6},{},{},{}", p.accuracy, self.seed, self.optimizer, self.batch_size)?;
        }
        Ok(())
    }
}

fn check_monotone(values: &[Option<f64>]) -> Result<()> {
    let ok = values.windows(2).all(|w| match (w[0], w[1]) {
        (None, Some(_)) => true,
        (Some(a), Some(b)) => a < b,
        _ => false,
    });
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArg("sweep axis must be strictly increasing (no truncation first)".into()))
    }
}

/// Train and test image sets of one manifest view.
pub fn load_split_sets(manifest: &DatasetManifest, root: &Path) -> Result<(ImageSet, ImageSet)> {
    let train = manifest.split_manifest(Split::Train).load_images(root)?;
    let test = manifest.split_manifest(Split::Test).load_images(root)?;
    Ok((train, test))
}

/// One model per cut-off at a fixed SNR, each scored on its cell's test split.
pub fn cutoff_sweep(
    manifest: &DatasetManifest,
    root: &Path,
    snr_db: f64,
    cutoffs: &[Option<f64>],
    setup: &TrainSetup,
    jobs: usize,
) -> Result<SweepResult> {
    check_monotone(cutoffs)?;
    let cells = cutoffs
        .iter()
        .map(|&c| manifest.cell(SampleKind::Spectrogram, snr_db, c))
        .collect::<Result<Vec<_>>>()?;
    let accuracies = parallel_map(&cells, jobs, |cell| {
        let (train, test) = load_split_sets(cell, root)?;
        Ok(setup.fit_and_evaluate(&train, &test)?.accuracy)
    })?;
    let points = cutoffs
        .iter()
        .zip(accuracies)
        .map(|(&value, accuracy)| SweepPoint { value, accuracy })
        .collect();
    Ok(SweepResult::new(SweepAxis::Cutoff, setup, points))
}

/// One model per SNR cell at a fixed cut-off.
pub fn snr_sweep(
    manifest: &DatasetManifest,
    root: &Path,
    snr_levels: &[f64],
    cutoff_db: Option<f64>,
    setup: &TrainSetup,
    jobs: usize,
) -> Result<SweepResult> {
    check_monotone(&snr_levels.iter().map(|&s| Some(s)).collect::<Vec<_>>())?;
    let cells = snr_levels
        .iter()
        .map(|&s| manifest.cell(SampleKind::Spectrogram, s, cutoff_db))
        .collect::<Result<Vec<_>>>()?;
    let accuracies = parallel_map(&cells, jobs, |cell| {
        let (train, test) = load_split_sets(cell, root)?;
        Ok(setup.fit_and_evaluate(&train, &test)?.accuracy)
    })?;
    let points = snr_levels
        .iter()
        .zip(accuracies)
        .map(|(&s, accuracy)| SweepPoint { value: Some(s), accuracy })
        .collect();
    Ok(SweepResult::new(SweepAxis::SnrDb, setup, points))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// Optimizer-major, in the order given.
    pub table: Vec<GridRow>,
    pub best: GridRow,
}

impl GridResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "optimizer,batch_size,accuracy")?;
        for r in &self.table {
            writeln!(w, "{},{},{:.6}", r.optimizer, r.batch_size, r.accuracy)?;
        }
        Ok(())
    }
}

/// Trains every optimizer × batch-size combination with the optimizers'
/// default constants; the best is the first row with the top accuracy.
pub fn grid_search(
    train: &ImageSet,
    test: &ImageSet,
    optimizers: &[OptimizerKind],
    batch_sizes: &[usize],
    base: &TrainSetup,
    jobs: usize,
) -> Result<GridResult> {
    if optimizers.is_empty() || batch_sizes.is_empty() {
        return Err(Error::InvalidArg("grid search needs optimizers and batch sizes".into()));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let combos: Vec<(OptimizerKind, usize)> = optimizers
        .iter()
        .flat_map(|&o| batch_sizes.iter().map(move |&b| (o, b)))
        .collect();
    let accuracies = parallel_map(&combos, jobs, |&(o, b)| {
        Ok(base.with_optimizer(o, b).fit_and_evaluate(train, test)?.accuracy)
    })?;
    let table: Vec<GridRow> = combos
        .iter()
        .zip(accuracies)
        .map(|(&(optimizer, batch_size), accuracy)| GridRow {
            optimizer,
            batch_size,
            accuracy,
        })
        .collect();
    let best = table
        .iter()
        .copied()
        .reduce(|b, r| if r.accuracy > b.accuracy { r } else { b })
        .expect("non-empty grid");
    Ok(GridResult { table, best })
}

/// Keeps at most `per_class` samples of each class, drawn with `seed` and
/// kept in their original order.
pub fn subsample_per_class(set: &ImageSet, per_class: usize, seed: u64) -> ImageSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for k in 0..set.classes() {
        let mut idx: Vec<usize> = (0..set.len()).filter(|&i| set.label(i) == k).collect();
        idx.shuffle(&mut rng);
        keep.extend(idx.into_iter().take(per_class));
    }
    keep.sort_unstable();
    set.subset(&keep)
}

fn min_class_count(set: &ImageSet) -> usize {
    (0..set.classes())
        .map(|k| set.labels().iter().filter(|&&l| l == k).count())
        .min()
        .unwrap_or(0)
}

/// Accuracy as a function of training samples per class, against a fixed
/// test set (optionally cut to `test_per_class` per class).
pub fn size_sweep(
    train: &ImageSet,
    test: &ImageSet,
    sizes: &[usize],
    test_per_class: Option<usize>,
    setup: &TrainSetup,
    jobs: usize,
) -> Result<SweepResult> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_monotone(&sizes.iter().map(|&s| Some(s as f64)).collect::<Vec<_>>())?;
    let available = min_class_count(train);
    if let Some(&max) = sizes.last() {
        if max > available || sizes[0] == 0 {
            return Err(Error::InvalidArg(format!(
                "sizes must lie in 1..={available} samples per class"
            )));
        }
    }
    let test = match test_per_class {
        Some(n) => {
            if n > min_class_count(test) {
                return Err(Error::InvalidArg(format!("test set has fewer than {n} samples in some class")));
            }
            subsample_per_class(test, n, setup.train.seed)
        }
        None => test.clone(),
    };
    let accuracies = parallel_map(sizes, jobs, |&n| {
        let sub = subsample_per_class(train, n, setup.train.seed.wrapping_add(n as u64));
        Ok(setup.fit_and_evaluate(&sub, &test)?.accuracy)
    })?;
    let points = sizes
        .iter()
        .zip(accuracies)
        .map(|(&n, accuracy)| SweepPoint {
            value: Some(n as f64),
            accuracy,
        })
        .collect();
    Ok(SweepResult::new(SweepAxis::Size, setup, points))
}

/// Accuracy of one trained model on each SNR level of a manifest view.
pub fn accuracy_by_snr(model: &Model, manifest: &DatasetManifest, root: &Path, setup: &TrainSetup) -> Result<SweepResult> {
    let mut points = Vec::new();
    for snr in manifest.snr_levels() {
        let view = DatasetManifest {
            entries: manifest.entries.iter().filter(|e| e.snr_db == snr).cloned().collect(),
            ..manifest.clone()
        };
        let (accuracy, _) = evaluate(model, &view.load_images(root)?)?;
        points.push(SweepPoint {
            value: Some(snr),
            accuracy,
        });
    }
    Ok(SweepResult::new(SweepAxis::SnrDb, setup, points))
}

/// Separation of in-library and out-of-library samples by model
/// uncertainty `1 - p_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub in_library: Vec<f64>,
    pub out_of_library: Vec<f64>,
    /// Uncertainties above this are flagged out-of-library.
    pub threshold: f64,
    /// Probability that a random out-of-library sample is more uncertain
    /// than a random in-library one, ties counted half.
    pub auc: f64,
    pub balanced_accuracy: f64,
    /// Shared area of the two normalized histograms.
    pub histogram_overlap: f64,
    pub in_median: f64,
    pub out_median: f64,
}

pub const OOD_HISTOGRAM_BINS: usize = 20;

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mann-Whitney estimate of P(out > in) with midranks for ties.
pub fn rank_auc(inside: &[f64], outside: &[f64]) -> Result<f64> {
    if inside.is_empty() || outside.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut pooled: Vec<(f64, bool)> = inside
        .iter()
        .map(|&v| (v, false))
        .chain(outside.iter().map(|&v| (v, true)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * pooled[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let (n_in, n_out) = (inside.len() as f64, outside.len() as f64);
    Ok((rank_sum - n_out * (n_out + 1.0) / 2.0) / (n_in * n_out))
}

fn balanced_accuracy(inside: &[f64], outside: &[f64], threshold: f64) -> f64 {
    let tn = inside.iter().filter(|&&u| u <= threshold).count() as f64 / inside.len() as f64;
    let tp = outside.iter().filter(|&&u| u > threshold).count() as f64 / outside.len() as f64;
    0.5 * (tn + tp)
}

/// Normalized histogram densities of `v` over `[0, 1]`.
pub fn histogram(v: &[f64], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for &u in v {
        let b = ((u * bins as f64).floor() as usize).min(bins - 1);
        h[b] += 1.0;
    }
    let scale = bins as f64 / v.len() as f64;
    h.iter_mut().for_each(|c| *c *= scale);
    h
}

/// Silverman's rule-of-thumb bandwidth, falling back to a small positive
/// width for degenerate samples.
pub fn silverman_bandwidth(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = mean(v);
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        1e-3
    }
}

/// Gaussian kernel density estimate of `v` at `x`.
pub fn kde(v: &[f64], bandwidth: f64, x: f64) -> f64 {
    let norm = 1.0 / (v.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    norm * v.iter().map(|&u| (-0.5 * ((x - u) / bandwidth).powi(2)).exp()).sum::<f64>()
}

/// Uncertainties of two groups of probability rows, separation AUC and the
/// balanced-accuracy-optimal threshold. When the out-of-library group is
/// the more uncertain, the threshold is searched strictly between the group
/// means.
pub fn ood_analysis(in_probabilities: &[Vec<f64>], out_probabilities: &[Vec<f64>]) -> Result<OodReport> {
    if in_probabilities.is_empty() || out_probabilities.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let inside: Vec<f64> = in_probabilities.iter().map(|p| cnn::uncertainty(p)).collect();
    let outside: Vec<f64> = out_probabilities.iter().map(|p| cnn::uncertainty(p)).collect();
    let auc = rank_auc(&inside, &outside)?;
    let (m_in, m_out) = (mean(&inside), mean(&outside));

    let mut pooled: Vec<f64> = inside.iter().chain(&outside).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();
    let mut candidates: Vec<f64> = pooled.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    if auc > 0.5 && m_in < m_out {
        candidates.retain(|&t| t > m_in && t < m_out);
        candidates.push(0.5 * (m_in + m_out));
    } else if candidates.is_empty() {
        candidates.push(pooled[0]);
    }
    candidates.sort_by(f64::total_cmp);
    let (threshold, best) = candidates
        .iter()
        .map(|&t| (t, balanced_accuracy(&inside, &outside, t)))
        .fold((f64::NAN, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });

    let h_in = histogram(&inside, OOD_HISTOGRAM_BINS);
    let h_out = histogram(&outside, OOD_HISTOGRAM_BINS);
    let overlap = h_in.iter().zip(&h_out).map(|(a, b)| a.min(*b)).sum::<f64>() / OOD_HISTOGRAM_BINS as f64;
    Ok(OodReport {
        in_median: median(&inside),
        out_median: median(&outside),
        in_library: inside,
        out_of_library: outside,
        threshold,
        auc,
        balanced_accuracy: best,
        histogram_overlap: overlap,
    })
}

impl OodReport {
    /// `bin_lo,bin_hi,in_density,out_density` rows over `[0, 1]`.
    pub fn write_histogram_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let bins = OOD_HISTOGRAM_BINS;
        let h_in = histogram(&self.in_library, bins);
        let h_out = histogram(&self.out_of_library, bins);
        writeln!(w, "bin_lo,bin_hi,in_density,out_density")?;
        for b in 0..bins {
            let lo = b as f64 / bins as f64;
            let hi = (b + 1) as f64 / bins as f64;
            writeln!(w, "{lo:.4},{hi:.4},{:.6},{:.6}", h_in[b], h_out[b])?;
        }
        Ok(())
    }

    /// `uncertainty,in_pdf,out_pdf` on 101 points of `[0, 1]`.
    pub fn write_kde_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let b_in = silverman_bandwidth(&self.in_library);
        let b_out = silverman_bandwidth(&self.out_of_library);
        writeln!(w, "uncertainty,in_pdf,out_pdf")?;
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            writeln!(
                w,
                "{x:.2},{:.6},{:.6}",
                kde(&self.in_library, b_in, x),
                kde(&self.out_of_library, b_out, x)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_rows(labels: &[usize], k: usize) -> Vec<Vec<f64>> {
        labels.iter().map(|&l| cnn::one_hot(l, k)).collect()
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let labels: Vec<usize> = (0..15).flat_map(|k| [k; 4]).collect();
        let (acc, cm) = score(&labels, &one_hot_rows(&labels, 15), 15).unwrap();
        assert_eq!(acc, 1.0);
        for t in 0..15 {
            for p in 0..15 {
                assert_eq!(cm.get(t, p), if t == p { 4 } else { 0 });
            }
        }
        let zeros = one_hot_rows(&vec![0; labels.len()], 15);
        let (acc, cm) = score(&labels, &zeros, 15).unwrap();
        assert!((acc - 1.0 / 15.0).abs() < 1e-12);
        assert!((0..15).all(|t| cm.row_sum(t) == 4));
        assert_eq!(cm.total(), 60);
    }

    #[test]
    fn empty_test_set() {
        assert!(matches!(score(&[], &[], 3), Err(Error::EmptyDataset)));
    }

    #[test]
    fn confusion_csv_layout() {
        let mut cm = ConfusionMatrix::new(2);
        cm.add(0, 1);
        cm.add(1, 1);
        let mut out = Vec::new();
        cm.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "true\\predicted,0,1\n0,0,1\n1,0,1\n");
    }

    #[test]
    fn auc_extremes_and_ties() {
        assert_eq!(rank_auc(&[0.0, 0.1], &[0.5, 0.9]).unwrap(), 1.0);
        assert_eq!(rank_auc(&[0.5, 0.9], &[0.0, 0.1]).unwrap(), 0.0);
        assert_eq!(rank_auc(&[0.3, 0.3], &[0.3, 0.3]).unwrap(), 0.5);
        // One of four pairs tied, one won: (1 + 0.5) / 4.
        assert_eq!(rank_auc(&[0.2, 0.4], &[0.4, 0.1]).unwrap(), 0.375);
    }

    #[test]
    fn separated_groups() {
        let k = 15;
        let inside = one_hot_rows(&[0, 3, 7, 14], k);
        let outside = vec![vec![1.0 / k as f64; k]; 5];
        let r = ood_analysis(&inside, &outside).unwrap();
        assert_eq!(r.auc, 1.0);
        assert!(r.in_library.iter().all(|&u| u == 0.0));
        assert!(r.threshold > 0.0 && r.threshold < 1.0 - 1.0 / k as f64);
        assert_eq!(r.balanced_accuracy, 1.0);
        assert_eq!(r.histogram_overlap, 0.0);
    }

    #[test]
    fn identical_groups() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![0.5 + i as f64 / 50.0, 0.5 - i as f64 / 50.0]).collect();
        let r = ood_analysis(&rows, &rows).unwrap();
        assert!((r.auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kde_integrates_to_one() {
        let v = [0.1, 0.2, 0.25, 0.4, 0.45, 0.5];
        let h = silverman_bandwidth(&v);
        let n = 4000;
        let area: f64 = (0..n).map(|i| kde(&v, h, -1.0 + 3.0 * (i as f64 + 0.5) / n as f64) * 3.0 / n as f64).sum();
        assert!((area - 1.0).abs() < 1e-6, "{area}");
    }

    #[test]
    fn histogram_is_a_density() {
        let v = [0.0, 0.01, 0.5, 0.99, 0.999];
        let h = histogram(&v, 10);
        assert!((h.iter().sum::<f64>() / 10.0 - 1.0).abs() < 1e-12);
        assert_eq!(h[9], 2.0 * 10.0 / 5.0);
    }

    #[test]
    fn sweep_csv_rows() {
        let setup = TrainSetup::default();
        let r = SweepResult::new(
            SweepAxis::Cutoff,
            &setup,
            vec![
                SweepPoint { value: None, accuracy: 0.1 },
                SweepPoint { value: Some(-20.0), accuracy: 0.9 },
            ],
        );
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("cutoff_db,accuracy,seed,optimizer,batch_size\nnone,0.100000,0,adam,8\n"));
        assert_eq!(r.best().unwrap().value, Some(-20.0));
    }

    #[test]
    fn axis_must_increase() {
        assert!(check_monotone(&[None, Some(-30.0), Some(-10.0)]).is_ok());
        assert!(check_monotone(&[Some(-10.0), None]).is_err());
        assert!(check_monotone(&[Some(-10.0), Some(-10.0)]).is_err());
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..17).collect();
        let out = parallel_map(&items, 4, |&x| Ok(x * x)).unwrap();
        assert_eq!(out, items.iter().map(|x| x * x).collect::<Vec<_>>());
    }
}
