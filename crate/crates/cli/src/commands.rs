use std::path::Path;

use rfclass::cnn::{self, checkpoint, Model};
use rfclass::dataset::{
    self, out_of_library_profile, ControllerProfile, CorpusFile, DatasetManifest, Renderer,
    SampleKind, Split, MANIFEST_FILE,
};
use rfclass::eval::{self, SweepResult};
use rfclass::signal::{self, TimeSeriesSignal, TransientMarks, TransientDetector};
use rfclass::spectro;
use serde::Serialize;

use crate::config::{Axis, RunConfig};
use crate::{write_file, CliError, SignalArgs};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_file(path, &buf)
}

fn library_profile(cfg: &RunConfig, id: usize) -> Result<ControllerProfile, CliError> {
    let lib = cfg.profiles();
    if id < lib.len() {
        return Ok(lib[id].clone());
    }
    if id == lib.len() {
        Ok(ControllerProfile {
            class_id: id,
            ..out_of_library_profile()
        })
    } else {
        Err(CliError::Config(format!(
            "profile {id} does not exist; ids are 0..{} plus {} for the unknown controller",
            lib.len(),
            lib.len()
        )))
    }
}

/// The clean capture and its marks, then optionally noised.
fn capture(cfg: &RunConfig, a: &SignalArgs) -> Result<(TimeSeriesSignal, TransientMarks), CliError> {
    let (clean, marks) = match (&a.input, a.profile) {
        (Some(path), _) => {
            let sig = signal::load_signal(path)?;
            let marks = match a.marks.as_deref() {
                Some(&[t_b, t_e]) => TransientMarks::new(t_b, t_e, sig.len())?,
                Some(_) => return Err(CliError::Config("--marks takes exactly t_b,t_e".into())),
                None => TransientDetector::default().detect(&sig)?,
            };
            (sig, marks)
        }
        (None, Some(id)) => {
            let c = &cfg.corpus;
            dataset::synth_signal(&library_profile(cfg, id)?, c.duration_s, c.sample_rate, c.noise_floor_rms, a.capture_seed)?
        }
        (None, None) => return Err(CliError::Config("pass --input or --profile".into())),
    };
    let noisy = match cfg.noise.snr_db {
        Some(snr) => signal::add_noise_with_model(&clean, marks, snr, cfg.noise.noise_seed, cfg.noise.model)?,
        None => clean,
    };
    Ok((noisy, marks))
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.echo()?;
    let manifest = dataset::build_corpus(&cfg.profiles(), &cfg.corpus, &dir)?;
    let train = manifest.split(Split::Train).len();
    let test = manifest.split(Split::Test).len();
    println!(
        "corpus: {} classes, {} SNR levels, {} cut-offs, {} images ({train} train, {test} test) in {}",
        manifest.num_classes(),
        manifest.snr_levels().len(),
        manifest.cutoffs().len(),
        manifest.entries.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct NoiseReport {
    marks: TransientMarks,
    snr_db: Option<f64>,
    measured: Option<signal::SnrReport>,
}

pub fn noise(cfg: &RunConfig, a: &SignalArgs) -> Result<(), CliError> {
    let dir = cfg.echo()?;
    let (noisy, marks) = capture(cfg, a)?;
    let path = dir.join("signal.rfsg");
    signal::save_signal(&noisy, &path)?;
    let measured = signal::measure_snr(&noisy, marks).ok();
    write_json(
        &dir.join("noise_report.json"),
        &NoiseReport {
            marks,
            snr_db: cfg.noise.snr_db,
            measured,
        },
    )?;
    match measured {
        Some(m) => println!("wrote {} ({} samples), measured SNR {:.3} dB", path.display(), noisy.len(), m.gamma_db),
        None => println!("wrote {} ({} samples), SNR not measurable", path.display(), noisy.len()),
    }
    Ok(())
}

pub fn spectrogram(cfg: &RunConfig, a: &SignalArgs) -> Result<(), CliError> {
    let dir = cfg.echo()?;
    let (noisy, marks) = capture(cfg, a)?;
    let renderer = Renderer::new(&cfg.corpus, &cfg.profiles())?;
    let mut spec = renderer.spectrogram(&noisy, marks)?;
    if let Some(c) = cfg.select.cutoff_db {
        spec = spectro::truncate(&spec, c);
    }
    write_with(&dir.join("spectrogram.csv"), |w| spec.write_csv(w))?;
    write_with(&dir.join("spectrogram.bin"), |w| spec.write_binary(w))?;
    println!(
        "spectrogram: {} rows x {} frames, {:.1} to {:.1} dB/Hz",
        spec.rows(),
        spec.cols(),
        spec.floor_db(),
        spec.ceil_db()
    );
    Ok(())
}

pub fn render(cfg: &RunConfig, a: &SignalArgs) -> Result<(), CliError> {
    let dir = cfg.echo()?;
    let (noisy, marks) = capture(cfg, a)?;
    let renderer = Renderer::new(&cfg.corpus, &cfg.profiles())?;
    let spec = renderer.spectrogram(&noisy, marks)?;
    let img = renderer.spectrogram_image(&spec, cfg.select.cutoff_db)?;
    img.save_png(&dir.join("spectrogram.png"))?;
    println!("spectrogram.png: {}x{}", img.width(), img.height());
    if renderer.plot().is_some() {
        let ts = renderer.timeseries_image(&noisy, marks)?;
        ts.save_png(&dir.join("timeseries.png"))?;
        println!("timeseries.png: {}x{}", ts.width(), ts.height());
    }
    Ok(())
}

fn load_manifest(data: &Path) -> Result<DatasetManifest, CliError> {
    Ok(DatasetManifest::load(&data.join(MANIFEST_FILE))?)
}

/// The manifest view named by the run's selection.
fn selected(cfg: &RunConfig, manifest: &DatasetManifest) -> Result<DatasetManifest, CliError> {
    let sel = &cfg.select;
    let cutoff = match sel.kind {
        SampleKind::Spectrogram => sel.cutoff_db,
        SampleKind::Timeseries => None,
    };
    if sel.merged {
        if sel.kind != SampleKind::Spectrogram {
            return Err(CliError::Config("merged sets are spectrogram-only".into()));
        }
        return Ok(dataset::merge_snr_sets(manifest, &manifest.snr_levels(), cutoff)?);
    }
    let snr = sel
        .snr_db
        .ok_or_else(|| CliError::Config("select a cell with --snr or use --merged".into()))?;
    Ok(manifest.cell(sel.kind, snr, cutoff)?)
}

fn check_model(model: &Model, manifest: &DatasetManifest) -> Result<(), CliError> {
    if model.num_classes() != manifest.num_classes() {
        return Err(CliError::Data(format!(
            "shape mismatch: model has {} classes, corpus has {}",
            model.num_classes(),
            manifest.num_classes()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    train_samples: usize,
    test_samples: usize,
    test_accuracy: f64,
    checkpoint_crc32: String,
}

pub fn train(cfg: &RunConfig, data: &Path) -> Result<(), CliError> {
    let manifest = load_manifest(data)?;
    let view = selected(cfg, &manifest)?;
    let dir = cfg.echo()?;
    let (train_set, test_set) = eval::load_split_sets(&view, data)?;
    let run = cfg.train.fit_and_evaluate(&train_set, &test_set)?;
    let bytes = checkpoint::encode(&run.model);
    write_file(&dir.join("model.rfnn"), &bytes)?;
    write_with(&dir.join("history.csv"), |w| {
        use std::io::Write;
        writeln!(w, "epoch,loss,accuracy")?;
        for e in &run.history {
            writeln!(w, "{},{:.6},{:.6}", e.epoch, e.loss, e.accuracy)?;
        }
        Ok(())
    })?;
    let crc = checkpoint::checksum(&bytes).map_or_else(String::new, |c| format!("{c:08x}"));
    write_json(
        &dir.join("train_report.json"),
        &TrainReport {
            train_samples: train_set.len(),
            test_samples: test_set.len(),
            test_accuracy: run.accuracy,
            checkpoint_crc32: crc.clone(),
        },
    )?;
    println!(
        "trained on {} samples, test accuracy {:.4} on {} samples, checkpoint crc32 {crc}",
        train_set.len(),
        run.accuracy,
        test_set.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    accuracy: f64,
    correct: u64,
    total: u64,
}

pub fn eval(cfg: &RunConfig, data: &Path, model_path: &Path) -> Result<(), CliError> {
    let manifest = load_manifest(data)?;
    let model = checkpoint::load(model_path)?;
    check_model(&model, &manifest)?;
    let test_view = selected(cfg, &manifest)?.split_manifest(Split::Test);
    let dir = cfg.echo()?;
    let (accuracy, cm) = eval::evaluate(&model, &test_view.load_images(data)?)?;
    write_with(&dir.join("confusion.csv"), |w| cm.write_csv(w))?;
    write_json(
        &dir.join("eval_report.json"),
        &EvalReport {
            accuracy,
            correct: cm.trace(),
            total: cm.total(),
        },
    )?;
    println!("accuracy {accuracy:.4} ({} of {})", cm.trace(), cm.total());
    if cfg.select.merged {
        let by_snr = eval::accuracy_by_snr(&model, &test_view, data, &cfg.train)?;
        write_with(&dir.join("accuracy_by_snr.csv"), |w| by_snr.write_csv(w))?;
        for p in &by_snr.points {
            println!("  {:>6} dB: {:.4}", p.value.unwrap_or(f64::NAN), p.accuracy);
        }
    }
    Ok(())
}

fn report_sweep(dir: &Path, result: &SweepResult) -> Result<(), CliError> {
    let stem = format!("sweep_{}", result.axis.name());
    write_with(&dir.join(format!("{stem}.csv")), |w| result.write_csv(w))?;
    write_json(&dir.join(format!("{stem}.json")), result)?;
    for p in &result.points {
        let v = p.value.map_or_else(|| "none".to_string(), |v| v.to_string());
        println!("{} {v}: accuracy {:.4}", result.axis.name(), p.accuracy);
    }
    Ok(())
}

pub fn sweep(cfg: &RunConfig, data: &Path) -> Result<(), CliError> {
    let manifest = load_manifest(data)?;
    let s = &cfg.sweep;
    let jobs = cfg.jobs;
    match s.axis {
        Axis::Cutoff => {
            let snr = cfg
                .select
                .snr_db
                .ok_or_else(|| CliError::Config("a cut-off sweep needs --snr".into()))?;
            let cutoffs = if s.cutoffs.is_empty() { manifest.cutoffs() } else { s.cutoffs.clone() };
            let dir = cfg.echo()?;
            let r = eval::cutoff_sweep(&manifest, data, snr, &cutoffs, &cfg.train, jobs)?;
            report_sweep(&dir, &r)
        }
        Axis::Snr => {
            let levels = if s.snr_levels.is_empty() { manifest.snr_levels() } else { s.snr_levels.clone() };
            let dir = cfg.echo()?;
            let r = eval::snr_sweep(&manifest, data, &levels, cfg.select.cutoff_db, &cfg.train, jobs)?;
            report_sweep(&dir, &r)
        }
        Axis::Size => {
            let view = selected(cfg, &manifest)?;
            let dir = cfg.echo()?;
            let (train_set, test_set) = eval::load_split_sets(&view, data)?;
            let r = eval::size_sweep(&train_set, &test_set, &s.sizes, s.test_per_class, &cfg.train, jobs)?;
            report_sweep(&dir, &r)
        }
        Axis::Grid => {
            let view = selected(cfg, &manifest)?;
            let dir = cfg.echo()?;
            let (train_set, test_set) = eval::load_split_sets(&view, data)?;
            let r = eval::grid_search(&train_set, &test_set, &s.optimizers, &s.batch_sizes, &cfg.train, jobs)?;
            write_with(&dir.join("grid.csv"), |w| r.write_csv(w))?;
            write_json(&dir.join("grid.json"), &r)?;
            println!(
                "best: {} batch {} accuracy {:.4} ({} runs)",
                r.best.optimizer,
                r.best.batch_size,
                r.best.accuracy,
                r.table.len()
            );
            Ok(())
        }
    }
}

pub fn ood(cfg: &RunConfig, data: &Path, model_path: &Path) -> Result<(), CliError> {
    let manifest = load_manifest(data)?;
    if cfg.select.kind != SampleKind::Spectrogram {
        return Err(CliError::Config("out-of-library analysis uses spectrogram images".into()));
    }
    if cfg.ood.out_profile < manifest.num_classes() {
        return Err(CliError::Config(format!(
            "out-of-library profile id {} is a trained class",
            cfg.ood.out_profile
        )));
    }
    if cfg.ood.count == 0 {
        return Err(CliError::Config("count must be positive".into()));
    }
    let model = checkpoint::load(model_path)?;
    check_model(&model, &manifest)?;
    let view = selected(cfg, &manifest)?;
    let corpus = CorpusFile::load(data)?;
    let dir = cfg.echo()?;

    let in_probs = cnn::predict_all(&model, &view.split_manifest(Split::Test).load_images(data)?)?;
    let renderer = Renderer::new(&corpus.config, &corpus.profiles)?;
    let profile = ControllerProfile {
        class_id: cfg.ood.out_profile,
        ..out_of_library_profile()
    };
    let snr_grid = match cfg.select.snr_db {
        Some(s) if !cfg.select.merged => vec![s],
        _ => view.snr_levels(),
    };
    let samples = dataset::spectrogram_samples(
        &renderer,
        &profile,
        &snr_grid,
        cfg.select.cutoff_db,
        cfg.ood.count,
        cfg.ood.sample_seed,
    )?;
    let out_probs = samples
        .iter()
        .map(|x| model.probabilities(x))
        .collect::<rfclass::Result<Vec<_>>>()?;
    let report = eval::ood_analysis(&in_probs, &out_probs)?;
    write_json(&dir.join("ood_report.json"), &report)?;
    write_with(&dir.join("ood_histogram.csv"), |w| report.write_histogram_csv(w))?;
    write_with(&dir.join("ood_kde.csv"), |w| report.write_kde_csv(w))?;
    println!(
        "AUC {:.4}, threshold {:.4}, balanced accuracy {:.4}, median uncertainty {:.4} in-library vs {:.4} out-of-library",
        report.auc, report.threshold, report.balanced_accuracy, report.in_median, report.out_median
    );
    Ok(())
}
