//! `rfclass`: batch front end for corpus synthesis, rendering, training,
//! evaluation, sweeps and out-of-library reports.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rfclass::cnn::OptimizerKind;
use rfclass::dataset::SampleKind;

use config::{Axis, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<rfclass::Error> for CliError {
    fn from(e: rfclass::Error) -> Self {
        use rfclass::Error as E;
        match e {
            E::Io { .. } => CliError::Io(e.to_string()),
            E::InvalidArg(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "rfclass", version, about = "Classify UAV controllers from RF captures")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for corpus synthesis, weight initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    log_level: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a labelled image corpus.
    Synth(SynthArgs),
    /// Add noise to one capture to reach a target SNR.
    Noise(SignalArgs),
    /// Write the band-limited spectrogram of one capture as CSV and binary.
    Spectrogram(SignalArgs),
    /// Render the spectrogram and time-series images of one capture.
    Render(SignalArgs),
    /// Train a classifier on a corpus cell or the merged SNR set.
    Train(TrainArgs),
    /// Evaluate a trained model on the test split.
    Eval(EvalArgs),
    /// Accuracy against cut-off, training size, SNR, or optimizer grid.
    Sweep(SweepArgs),
    /// Uncertainty of in-library and out-of-library samples.
    Ood(OodArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    per_class: Option<usize>,
    /// Comma-separated SNR levels in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_grid: Option<Vec<f64>>,
    /// Comma-separated cut-offs in dB/Hz; `none` for no truncation.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_cutoff)]
    cutoff_grid: Option<Vec<Cutoff>>,
    /// Skip time-series images.
    #[arg(long)]
    no_timeseries: bool,
}

#[derive(Debug, Args)]
struct SignalArgs {
    /// RFSG signal file.
    #[arg(long, conflicts_with = "profile")]
    input: Option<PathBuf>,
    /// Transient marks `t_b,t_e` for `--input`; detected when omitted.
    #[arg(long, value_delimiter = ',', num_args = 1, requires = "input")]
    marks: Option<Vec<usize>>,
    /// Synthesize a capture of this library profile instead of reading one.
    #[arg(long)]
    profile: Option<usize>,
    #[arg(long, default_value_t = 0)]
    capture_seed: u64,
    /// Target SNR in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    #[arg(long, value_enum)]
    noise_model: Option<NoiseModelArg>,
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Truncation cut-off in dB/Hz, or `none`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_cutoff)]
    cutoff: Option<Cutoff>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NoiseModelArg {
    PowerExact,
    LinearDelta,
}

#[derive(Debug, Args)]
struct SelectArgs {
    /// Corpus directory written by `synth`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Use the cell at this SNR.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "merged")]
    snr: Option<f64>,
    /// Use every SNR level at the cut-off.
    #[arg(long)]
    merged: bool,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_cutoff)]
    cutoff: Option<Cutoff>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Spectrogram,
    Timeseries,
}

#[derive(Debug, Args)]
struct TrainFlags {
    #[arg(long, value_parser = parse_optimizer)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    select: SelectArgs,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    select: SelectArgs,
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    select: SelectArgs,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, value_enum)]
    axis: Option<Axis>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_cutoff)]
    cutoffs: Option<Vec<Cutoff>>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    test_per_class: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_levels: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_optimizer)]
    optimizers: Option<Vec<OptimizerKind>>,
    #[arg(long, value_delimiter = ',')]
    batch_sizes: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct OodArgs {
    #[command(flatten)]
    select: SelectArgs,
    #[arg(long)]
    model: PathBuf,
    /// Class id of the held-out profile.
    #[arg(long)]
    out_profile: Option<usize>,
    /// Number of out-of-library samples.
    #[arg(long)]
    count: Option<usize>,
}

/// A cut-off in dB/Hz, or no truncation.
#[derive(Debug, Clone, Copy)]
struct Cutoff(Option<f64>);

fn parse_cutoff(s: &str) -> Result<Cutoff, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(Cutoff(None));
    }
    s.parse::<f64>().map(|v| Cutoff(Some(v))).map_err(|e| format!("{s:?}: {e}"))
}

fn cutoffs(v: &[Cutoff]) -> Vec<Option<f64>> {
    v.iter().map(|c| c.0).collect()
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    s.parse().map_err(|e: rfclass::Error| e.to_string())
}

impl SelectArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(k) = self.kind {
            cfg.select.kind = match k {
                KindArg::Spectrogram => SampleKind::Spectrogram,
                KindArg::Timeseries => SampleKind::Timeseries,
            };
        }
        if let Some(s) = self.snr {
            cfg.select.snr_db = Some(s);
            cfg.select.merged = false;
        }
        if self.merged {
            cfg.select.merged = true;
            cfg.select.snr_db = None;
        }
        if let Some(c) = self.cutoff {
            cfg.select.cutoff_db = c.0;
        }
    }
}

impl TrainFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(o) = self.optimizer {
            let batch = cfg.train.train.batch_size;
            cfg.train = cfg.train.with_optimizer(o, batch);
        }
        if let Some(b) = self.batch {
            cfg.train.train.batch_size = b;
        }
        if let Some(e) = self.epochs {
            cfg.train.train.epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            cfg.train.optimizer.learning_rate = lr;
        }
    }
}

impl SignalArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.snr {
            cfg.noise.snr_db = Some(s);
        }
        if let Some(m) = self.noise_model {
            cfg.noise.model = match m {
                NoiseModelArg::PowerExact => rfclass::signal::NoiseModel::PowerExact,
                NoiseModelArg::LinearDelta => rfclass::signal::NoiseModel::LinearDelta,
            };
        }
        if let Some(s) = self.noise_seed {
            cfg.noise.noise_seed = s;
        }
        if let Some(c) = self.cutoff {
            cfg.select.cutoff_db = c.0;
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let g = &cli.global;
    if let Some(o) = &g.out {
        cfg.out_dir = Some(o.clone());
    }
    if g.seed.is_some() {
        cfg.seed = g.seed;
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    if let Some(l) = &g.log_level {
        cfg.log_level = l.clone();
    }
    match &cli.command {
        Command::Synth(a) => {
            if let Some(p) = a.per_class {
                cfg.corpus.per_class = p;
            }
            if let Some(s) = &a.snr_grid {
                cfg.corpus.snr_grid = s.clone();
            }
            if let Some(c) = &a.cutoff_grid {
                cfg.corpus.cutoff_grid = cutoffs(c);
            }
            if a.no_timeseries {
                cfg.corpus.timeseries_size = None;
            }
        }
        Command::Noise(a) | Command::Spectrogram(a) | Command::Render(a) => a.apply(&mut cfg),
        Command::Train(a) => {
            a.select.apply(&mut cfg);
            a.train.apply(&mut cfg);
        }
        Command::Eval(a) => a.select.apply(&mut cfg),
        Command::Sweep(a) => {
            a.select.apply(&mut cfg);
            a.train.apply(&mut cfg);
            let s = &mut cfg.sweep;
            if let Some(x) = a.axis {
                s.axis = x;
            }
            if let Some(v) = &a.cutoffs {
                s.cutoffs = cutoffs(v);
            }
            if let Some(v) = &a.sizes {
                s.sizes = v.clone();
            }
            if a.test_per_class.is_some() {
                s.test_per_class = a.test_per_class;
            }
            if let Some(v) = &a.snr_levels {
                s.snr_levels = v.clone();
            }
            if let Some(v) = &a.optimizers {
                s.optimizers = v.clone();
            }
            if let Some(v) = &a.batch_sizes {
                s.batch_sizes = v.clone();
            }
        }
        Command::Ood(a) => {
            a.select.apply(&mut cfg);
            if let Some(p) = a.out_profile {
                cfg.ood.out_profile = p;
            }
            if let Some(c) = a.count {
                cfg.ood.count = c;
            }
        }
    }
    cfg.finish()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli)?;
    env_logger::Builder::new()
        .filter_level(config::log_filter(&cfg.log_level).expect("validated"))
        .format_timestamp(None)
        .try_init()
        .ok();
    match &cli.command {
        Command::Synth(_) => commands::synth(&cfg),
        Command::Noise(a) => commands::noise(&cfg, a),
        Command::Spectrogram(a) => commands::spectrogram(&cfg, a),
        Command::Render(a) => commands::render(&cfg, a),
        Command::Train(a) => commands::train(&cfg, &a.select.data),
        Command::Eval(a) => commands::eval(&cfg, &a.select.data, &a.model),
        Command::Sweep(a) => commands::sweep(&cfg, &a.select.data),
        Command::Ood(a) => commands::ood(&cfg, &a.select.data, &a.model),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rfclass: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
