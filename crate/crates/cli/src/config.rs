//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use rfclass::dataset::{builtin_profiles, ControllerProfile, CorpusConfig, SampleKind};
use rfclass::eval::TrainSetup;
use rfclass::cnn::OptimizerKind;
use rfclass::signal::NoiseModel;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const RESOLVED_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides the corpus, shuffling and initialization seeds when set.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    /// One of error, warn, info, debug, trace.
    pub log_level: String,
    pub jobs: usize,
    pub corpus: CorpusConfig,
    /// Controller library for `synth`; the built-in library when absent.
    pub profiles: Option<Vec<ControllerProfile>>,
    pub train: TrainSetup,
    pub select: Selection,
    pub noise: NoiseSettings,
    pub sweep: SweepSettings,
    pub ood: OodSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: None,
            log_level: "info".into(),
            jobs: 1,
            corpus: CorpusConfig::default(),
            profiles: None,
            train: TrainSetup::default(),
            select: Selection::default(),
            noise: NoiseSettings::default(),
            sweep: SweepSettings::default(),
            ood: OodSettings::default(),
        }
    }
}

/// Which corpus images a command trains or evaluates on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Selection {
    pub kind: SampleKind,
    pub snr_db: Option<f64>,
    /// Union of every SNR level at `cutoff_db`.
    pub merged: bool,
    pub cutoff_db: Option<f64>,
}

impl Default for Selection {
    fn default() -> Self {
        Self {
            kind: SampleKind::Spectrogram,
            snr_db: None,
            merged: false,
            cutoff_db: Some(-10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSettings {
    /// Target SNR; `None` keeps the clean capture.
    pub snr_db: Option<f64>,
    pub model: NoiseModel,
    pub noise_seed: u64,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            snr_db: None,
            model: NoiseModel::default(),
            noise_seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Cutoff,
    Size,
    Snr,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub axis: Axis,
    /// Cut-off grid; empty means every cut-off in the corpus.
    pub cutoffs: Vec<Option<f64>>,
    pub sizes: Vec<usize>,
    pub test_per_class: Option<usize>,
    /// SNR grid; empty means every SNR in the corpus.
    pub snr_levels: Vec<f64>,
    pub optimizers: Vec<OptimizerKind>,
    pub batch_sizes: Vec<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            axis: Axis::Cutoff,
            cutoffs: Vec::new(),
            sizes: vec![10, 20, 30, 40, 50, 60, 75],
            test_per_class: Some(25),
            snr_levels: Vec::new(),
            optimizers: OptimizerKind::ALL.to_vec(),
            batch_sizes: vec![1, 2, 4, 8, 16, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OodSettings {
    /// Class id given to the held-out profile; must not be a trained class.
    pub out_profile: usize,
    pub count: usize,
    pub sample_seed: u64,
}

impl Default for OodSettings {
    fn default() -> Self {
        Self {
            out_profile: 15,
            count: 40,
            sample_seed: 7,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies the global seed and checks settings that no single module
    /// validates.
    pub fn finish(&mut self) -> Result<(), CliError> {
        if let Some(s) = self.seed {
            self.corpus.seed = s;
            self.train.train.seed = s;
            self.train.init_seed = s;
        }
        if self.jobs == 0 {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        if log_filter(&self.log_level).is_none() {
            return Err(CliError::Config(format!("unknown log level {:?}", self.log_level)));
        }
        if self.train.train.batch_size == 0 || self.train.train.epochs == 0 {
            return Err(CliError::Config("batch size and epochs must be positive".into()));
        }
        if !(self.train.optimizer.learning_rate > 0.0 && self.train.optimizer.learning_rate.is_finite()) {
            return Err(CliError::Config("learning rate must be positive".into()));
        }
        self.corpus.validate().map_err(|e| CliError::Config(e.to_string()))?;
        rfclass::dataset::check_profiles(&self.profiles(), self.corpus.sample_rate)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn profiles(&self) -> Vec<ControllerProfile> {
        self.profiles.clone().unwrap_or_else(builtin_profiles)
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| CliError::Config("no output directory; pass --out or set out_dir".into()))
    }

    /// Creates the output directory and writes the resolved configuration
    /// into it.
    pub fn echo(&self) -> Result<PathBuf, CliError> {
        let dir = self.out_dir()?.to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        crate::write_file(&dir.join(RESOLVED_CONFIG_FILE), text.as_bytes())?;
        Ok(dir)
    }
}

pub fn log_filter(level: &str) -> Option<log::LevelFilter> {
    level.parse().ok()
}
