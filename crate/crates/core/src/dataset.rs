//! Synthetic controller captures and labeled image corpora.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::seq::SliceRandom;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cnn::{ImageSet, Shape3};
use crate::error::{Error, Result};
use crate::render::{self, ColorMap, ColorScale, GrayImage, PlotSpec, RgbImage};
use crate::signal::{self, TimeSeriesSignal, TransientMarks};
use crate::spectro::{self, Spectrogram, WindowSpec};

/// Fraction of each synthetic record that precedes the first burst.
pub const LEAD_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Modulation {
    /// Carrier shifted by ±`deviation_hz`, one random bit per symbol.
    Fsk { deviation_hz: f64, symbol_rate: f64 },
    /// Carrier keyed on and off by random bits.
    Ook { symbol_rate: f64 },
}

impl Modulation {
    fn symbol_rate(&self) -> f64 {
        match *self {
            Modulation::Fsk { symbol_rate, .. } | Modulation::Ook { symbol_rate } => symbol_rate,
        }
    }

    fn deviation(&self) -> f64 {
        match *self {
            Modulation::Fsk { deviation_hz, .. } => deviation_hz,
            Modulation::Ook { .. } => 0.0,
        }
    }
}

/// Burst structure of one simulated remote controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerProfile {
    pub class_id: usize,
    pub name: String,
    pub carrier_hz: f64,
    pub burst_period_s: f64,
    /// Fraction of each period the transmitter is on.
    pub burst_duty: f64,
    /// Offset from the carrier for successive bursts, cycled.
    pub hop_pattern: Vec<f64>,
    pub modulation: Modulation,
    /// Raised-cosine rise time at the start of every burst.
    pub envelope_rise_s: f64,
    /// RMS of the noise-free burst train after the first rise.
    pub amplitude_rms: f64,
}

impl ControllerProfile {
    /// Lowest and highest instantaneous frequency the profile transmits.
    pub fn frequency_span_hz(&self) -> (f64, f64) {
        let dev = self.modulation.deviation();
        let lo = self.hop_pattern.iter().fold(f64::INFINITY, |a, &h| a.min(h));
        let hi = self.hop_pattern.iter().fold(f64::NEG_INFINITY, |a, &h| a.max(h));
        (self.carrier_hz + lo - dev, self.carrier_hz + hi + dev)
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArg(format!("profile {}: {msg}", self.class_id)));
        if self.hop_pattern.is_empty() {
            return bad("empty hop pattern".into());
        }
        if !(self.burst_duty > 0.0 && self.burst_duty < 1.0) {
            return bad(format!("duty {} outside (0, 1)", self.burst_duty));
        }
        let positive = [
            self.carrier_hz,
            self.burst_period_s,
            self.envelope_rise_s,
            self.amplitude_rms,
            self.modulation.symbol_rate(),
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("carrier, timing and amplitude must be positive".into());
        }
        let (lo, hi) = self.frequency_span_hz();
        if lo <= 0.0 || hi >= sample_rate / 2.0 {
            return bad(format!(
                "span {lo}..{hi} Hz leaves (0, {}) Hz",
                sample_rate / 2.0
            ));
        }
        if self.envelope_rise_s >= self.burst_period_s * self.burst_duty {
            return bad("rise time exceeds burst length".into());
        }
        Ok(())
    }
}

fn profile(
    class_id: usize,
    carrier_khz: f64,
    hops_khz: &[f64],
    period_us: f64,
    duty: f64,
    modulation: Modulation,
    rise_us: f64,
) -> ControllerProfile {
    ControllerProfile {
        class_id,
        name: format!("controller-{class_id:02}"),
        carrier_hz: carrier_khz * 1e3,
        burst_period_s: period_us * 1e-6,
        burst_duty: duty,
        hop_pattern: hops_khz.iter().map(|h| h * 1e3).collect(),
        modulation,
        envelope_rise_s: rise_us * 1e-6,
        amplitude_rms: DEFAULT_AMPLITUDE_RMS,
    }
}

fn fsk(dev_khz: f64, rate_khz: f64) -> Modulation {
    Modulation::Fsk {
        deviation_hz: dev_khz * 1e3,
        symbol_rate: rate_khz * 1e3,
    }
}

fn ook(rate_khz: f64) -> Modulation {
    Modulation::Ook { symbol_rate: rate_khz * 1e3 }
}

/// Default burst amplitude; with [`DEFAULT_NOISE_FLOOR_RMS`] the clean
/// captures sit at 30 dB SNR.
pub const DEFAULT_AMPLITUDE_RMS: f64 = 31.622776601683793;
pub const DEFAULT_NOISE_FLOOR_RMS: f64 = 1.0;

/// The fifteen built-in controllers, class ids 0..15.
///
/// Controllers come in families that share burst period, duty and
/// modulation, so their envelopes look alike and they differ in carrier, hop
/// pattern and rise time. Profiles 3 and 13 differ only by an 8 kHz carrier
/// offset.
pub fn builtin_profiles() -> Vec<ControllerProfile> {
    let a = (400.0, 0.5, fsk(10.0, 25.0));
    let b = (300.0, 0.6, ook(20.0));
    let c = (500.0, 0.4, fsk(15.0, 40.0));
    let d = (350.0, 0.45, ook(30.0));
    let e = (450.0, 0.55, fsk(8.0, 20.0));
    let p = |id, carrier, hops: &[f64], (period, duty, m): (f64, f64, Modulation), rise| {
        profile(id, carrier, hops, period, duty, m, rise)
    };
    vec![
        p(0, 140.0, &[0.0], a, 30.0),
        p(1, 250.0, &[0.0, 60.0], a, 35.0),
        p(2, 330.0, &[0.0, -40.0, 40.0], a, 25.0),
        p(3, 180.0, &[0.0, 80.0, 30.0], b, 40.0),
        p(4, 300.0, &[0.0], b, 50.0),
        p(5, 220.0, &[0.0, -60.0, 60.0, 120.0], b, 45.0),
        p(6, 120.0, &[0.0, 120.0], c, 20.0),
        p(7, 200.0, &[0.0, 40.0, 80.0, 120.0], c, 25.0),
        p(8, 350.0, &[0.0, -150.0], c, 15.0),
        p(9, 160.0, &[0.0], d, 60.0),
        p(10, 280.0, &[0.0, -60.0, -30.0], d, 55.0),
        p(11, 370.0, &[0.0, -200.0], d, 50.0),
        p(12, 240.0, &[0.0, 90.0, -90.0], e, 35.0),
        p(13, 188.0, &[0.0, 80.0, 30.0], b, 40.0),
        p(14, 310.0, &[0.0, -160.0, -80.0], e, 30.0),
    ]
}

/// A controller absent from the built-in library, for out-of-library tests.
pub fn out_of_library_profile() -> ControllerProfile {
    let mut p = profile(15, 230.0, &[0.0, 100.0, -70.0, 50.0], 260.0, 0.65, fsk(12.0, 30.0), 35.0);
    p.name = "unknown".into();
    p
}

fn burst_waveform(p: &ControllerProfile, len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let period = p.burst_period_s * fs;
    let on = period * p.burst_duty;
    let rise = p.envelope_rise_s * fs;
    let symbol = fs / p.modulation.symbol_rate();
    let mut phase = rng.gen::<f64>() * 2.0 * PI;
    let mut current = (usize::MAX, usize::MAX);
    let mut bit = false;
    let mut out = vec![0.0; len];
    for (i, v) in out.iter_mut().enumerate() {
        let burst = (i as f64 / period).floor() as usize;
        let pos = i as f64 - burst as f64 * period;
        let sym = (pos / symbol).floor() as usize;
        if (burst, sym) != current {
            current = (burst, sym);
            bit = rng.gen();
        }
        let hop = p.hop_pattern[burst % p.hop_pattern.len()];
        let (freq, keyed) = match p.modulation {
            Modulation::Fsk { deviation_hz, .. } => {
                let dev = if bit { deviation_hz } else { -deviation_hz };
                (p.carrier_hz + hop + dev, true)
            }
            Modulation::Ook { .. } => (p.carrier_hz + hop, bit),
        };
        phase = (phase + 2.0 * PI * freq / fs) % (2.0 * PI);
        if pos < on && keyed {
            let env = if pos < rise { 0.5 * (1.0 - (PI * pos / rise).cos()) } else { 1.0 };
            *v = env * phase.sin();
        }
    }
    out
}

fn scale_to_rms(x: &mut [f64], rms: f64) {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    if ms > 0.0 {
        let g = rms / ms.sqrt();
        x.iter_mut().for_each(|v| *v *= g);
    }
}

/// Noise-only lead followed by the profile's burst train over white noise.
///
/// The burst train is scaled to `amplitude_rms` after the first rise and the
/// noise is rescaled to exactly `noise_floor_rms` on each side of the onset,
/// so the returned marks measure at `20·log10(amplitude_rms/noise_floor_rms)`.
pub fn synth_signal(
    profile: &ControllerProfile,
    duration_s: f64,
    sample_rate: f64,
    noise_floor_rms: f64,
    seed: u64,
) -> Result<(TimeSeriesSignal, TransientMarks)> {
    if !(sample_rate.is_finite() && sample_rate > 0.0 && duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::InvalidArg("duration and sample rate must be positive".into()));
    }
    if !(noise_floor_rms.is_finite() && noise_floor_rms > 0.0) {
        return Err(Error::InvalidArg("noise floor must be positive".into()));
    }
    profile.validate(sample_rate)?;
    let n = (duration_s * sample_rate).round() as usize;
    let min_len = 4 * WindowSpec::default().size;
    if n < min_len {
        return Err(Error::SignalTooShort { len: n, needed: min_len });
    }
    let t_b = (n as f64 * LEAD_FRACTION).round() as usize;
    let rise = ((profile.envelope_rise_s * sample_rate).round() as usize).max(1);
    let t_e = t_b + rise;
    if t_e >= n {
        return Err(Error::SignalTooShort { len: n, needed: t_e + 1 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let carrier_jitter = rng.gen_range(-500.0..500.0);
    let mut jittered = profile.clone();
    jittered.carrier_hz += carrier_jitter;
    let burst = burst_waveform(&jittered, n - t_b, sample_rate, &mut rng);
    if burst[rise..].iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateSignal("burst train is silent".into()));
    }
    let mut samples: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    scale_to_rms(&mut samples[..t_b], noise_floor_rms);
    scale_to_rms(&mut samples[t_b..], noise_floor_rms);

    // Gain g solving mean((g·b + n)²) − σ² = A² over [t_e, N), so the
    // measured SNR lands exactly on the profile's nominal value.
    let (b, w) = (&burst[rise..], &samples[t_e..]);
    let len = b.len() as f64;
    let bb = b.iter().map(|v| v * v).sum::<f64>() / len;
    let bw = b.iter().zip(w).map(|(x, y)| x * y).sum::<f64>() / len;
    let ww = w.iter().map(|v| v * v).sum::<f64>() / len;
    let k = ww - noise_floor_rms.powi(2) - profile.amplitude_rms.powi(2);
    let gain = (-bw + (bw * bw - bb * k).max(0.0).sqrt()) / bb;
    for (s, v) in samples[t_b..].iter_mut().zip(&burst) {
        *s += gain * v;
    }
    Ok((TimeSeriesSignal::new(samples, sample_rate)?, TransientMarks::new(t_b, t_e, n)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: usize,
    pub height: usize,
}

impl ImageSize {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }
}

/// Everything that determines a corpus: capture synthesis, spectrogram and
/// image geometry, and the SNR × cut-off grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub sample_rate: f64,
    pub duration_s: f64,
    pub noise_floor_rms: f64,
    pub window: WindowSpec,
    /// Frequency rows kept in spectrogram images, `[f_lo, f_hi]` in Hz.
    pub band_hz: [f64; 2],
    /// Samples of leading noise kept before the transient.
    pub margin: usize,
    pub spectrogram_size: ImageSize,
    pub color_scale: ColorScale,
    /// With an absolute scale, truncated images use the cut-off as the
    /// color floor.
    pub floor_follows_cutoff: bool,
    /// `None` skips time-series images.
    pub timeseries_size: Option<ImageSize>,
    /// Half-range of the time-series vertical axis; defaults to four times
    /// the library's burst RMS.
    pub plot_amplitude: Option<f64>,
    pub snr_grid: Vec<f64>,
    /// `None` renders the spectrogram without truncation.
    pub cutoff_grid: Vec<Option<f64>>,
    pub per_class: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            sample_rate: 1e6,
            duration_s: 2.048e-3,
            noise_floor_rms: DEFAULT_NOISE_FLOOR_RMS,
            window: WindowSpec::default(),
            band_hz: [100e3, 400e3],
            margin: 64,
            spectrogram_size: ImageSize::new(256, 64),
            color_scale: ColorScale::Absolute {
                floor_db: -60.0,
                ceil_db: 0.0,
            },
            floor_follows_cutoff: true,
            timeseries_size: Some(ImageSize::new(128, 128)),
            plot_amplitude: None,
            snr_grid: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 30.0],
            cutoff_grid: vec![None, Some(-10.0)],
            per_class: 100,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if self.per_class < 4 {
            return Err(Error::InvalidArg(format!("per_class {} is below 4", self.per_class)));
        }
        if self.snr_grid.is_empty() || self.cutoff_grid.is_empty() {
            return Err(Error::InvalidArg("SNR and cut-off grids must be non-empty".into()));
        }
        if self.snr_grid.iter().any(|v| !v.is_finite()) || self.cutoff_grid.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArg("grid values must be finite".into()));
        }
        if !distinct(self.snr_grid.iter().map(|v| v.to_bits()))
            || !distinct(self.cutoff_grid.iter().map(|v| v.map(f64::to_bits)))
        {
            return Err(Error::InvalidArg("grid values must be distinct".into()));
        }
        let sizes = std::iter::once(self.spectrogram_size).chain(self.timeseries_size);
        for s in sizes {
            if s.width < 8 || s.height < 8 {
                return Err(Error::InvalidArg(format!("image {}x{} is smaller than 8x8", s.width, s.height)));
            }
        }
        if let ColorScale::Absolute { floor_db, ceil_db } = self.color_scale {
            if !(floor_db.is_finite() && ceil_db.is_finite() && floor_db < ceil_db) {
                return Err(Error::InvalidArg("absolute color scale needs floor < ceil".into()));
            }
        }
        if let Some(a) = self.plot_amplitude {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidArg("plot amplitude must be positive".into()));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON of this config and the profiles.
    pub fn hash(&self, profiles: &[ControllerProfile]) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        h.update(serde_json::to_vec(profiles).expect("profiles serialize"));
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn distinct<T: Ord>(it: impl Iterator<Item = T>) -> bool {
    let mut seen = BTreeSet::new();
    it.into_iter().all(|v| seen.insert(v))
}

/// Deterministic 64-bit seed from a base seed and a tag path.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// Turns noisy captures into the corpus's spectrogram and time-series images.
#[derive(Debug, Clone)]
pub struct Renderer {
    config: CorpusConfig,
    plot: Option<PlotSpec>,
    colormap: ColorMap,
}

impl Renderer {
    pub fn new(config: &CorpusConfig, profiles: &[ControllerProfile]) -> Result<Self> {
        config.validate()?;
        let plot = config.timeseries_size.map(|size| {
            let amplitude = config.plot_amplitude.unwrap_or_else(|| {
                let ms = profiles.iter().map(|p| p.amplitude_rms.powi(2)).sum::<f64>()
                    / profiles.len().max(1) as f64;
                4.0 * ms.sqrt()
            });
            PlotSpec {
                width: size.width,
                height: size.height,
                amplitude,
                margin: config.margin,
            }
        });
        Ok(Self {
            config: config.clone(),
            plot,
            colormap: ColorMap::spectrum(),
        })
    }

    pub fn config(&self) -> &CorpusConfig {
        &self.config
    }

    pub fn plot(&self) -> Option<&PlotSpec> {
        self.plot.as_ref()
    }

    /// Band-limited spectrogram of `[t_b - margin, N)`.
    pub fn spectrogram(&self, noisy: &TimeSeriesSignal, marks: TransientMarks) -> Result<Spectrogram> {
        let start = marks.t_b.saturating_sub(self.config.margin);
        let tail = TimeSeriesSignal::new(noisy.samples()[start..].to_vec(), noisy.sample_rate())?;
        let full = spectro::stft_spectrogram(&tail, &self.config.window)?;
        let [lo, hi] = self.config.band_hz;
        spectro::crop_band(&full, lo, hi)
    }

    /// Color scale used for images truncated at `cutoff_db`.
    pub fn color_scale(&self, cutoff_db: Option<f64>) -> ColorScale {
        match (self.config.color_scale, cutoff_db) {
            (ColorScale::Absolute { floor_db, ceil_db }, Some(c)) if self.config.floor_follows_cutoff && c > floor_db => {
                ColorScale::Absolute {
                    floor_db: c.min(ceil_db),
                    ceil_db,
                }
            }
            (scale, _) => scale,
        }
    }

    /// Truncates at `cutoff_db` (if any), colors and resizes.
    pub fn spectrogram_image(&self, spec: &Spectrogram, cutoff_db: Option<f64>) -> Result<RgbImage> {
        let scale = self.color_scale(cutoff_db);
        let img = match cutoff_db {
            Some(c) => render::colormap_apply_scaled(&spectro::truncate(spec, c), &self.colormap, scale),
            None => render::colormap_apply_scaled(spec, &self.colormap, scale),
        };
        let size = self.config.spectrogram_size;
        img.resize(size.width, size.height)
    }

    pub fn timeseries_image(&self, noisy: &TimeSeriesSignal, marks: TransientMarks) -> Result<GrayImage> {
        let plot = self
            .plot
            .as_ref()
            .ok_or_else(|| Error::InvalidArg("time-series rendering is disabled".into()))?;
        render::render_timeseries(noisy, plot, marks)
    }
}

/// Channel-major values in `[0, 1]`.
pub fn rgb_to_sample(img: &RgbImage) -> Vec<f64> {
    let plane = img.width() * img.height();
    let mut out = vec![0.0; 3 * plane];
    for (i, px) in img.pixels().chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = px[c] as f64 / 255.0;
        }
    }
    out
}

pub fn gray_to_sample(img: &GrayImage) -> Vec<f64> {
    img.pixels().iter().map(|&v| v as f64 / 255.0).collect()
}

/// A clean capture of `profile` noised to `snr_db`. Targets at the clean
/// capture's SNR return it unchanged.
pub fn noisy_capture(
    profile: &ControllerProfile,
    config: &CorpusConfig,
    capture_seed: u64,
    snr_db: f64,
) -> Result<(TimeSeriesSignal, TransientMarks)> {
    let (clean, marks) = synth_signal(
        profile,
        config.duration_s,
        config.sample_rate,
        config.noise_floor_rms,
        capture_seed,
    )?;
    let noise_seed = derive_seed(capture_seed, &[snr_db.to_bits()]);
    Ok((signal::add_noise_to_snr(&clean, marks, snr_db, noise_seed)?, marks))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Spectrogram,
    Timeseries,
}

impl SampleKind {
    pub fn channels(&self) -> usize {
        match self {
            SampleKind::Spectrogram => 3,
            SampleKind::Timeseries => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub class_id: usize,
    pub snr_db: f64,
    pub cutoff_db: Option<f64>,
    pub split: Split,
    pub kind: SampleKind,
    /// Seed of the clean capture.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub config_hash: String,
    pub classes: Vec<ClassInfo>,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "corpus_config.json";

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.iter().enumerate().any(|(i, c)| c.id != i) {
            return Err(Error::Format("class ids must be 0..K-1 in order".into()));
        }
        if let Some(e) = self.entries.iter().find(|e| e.class_id >= self.classes.len()) {
            return Err(Error::Format(format!("entry {} has unknown class {}", e.path, e.class_id)));
        }
        if !distinct(self.entries.iter().map(|e| e.path.as_str())) {
            return Err(Error::Format("manifest references a file twice".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    fn with_entries(&self, entries: Vec<ManifestEntry>) -> Self {
        Self {
            version: self.version,
            config_hash: self.config_hash.clone(),
            classes: self.classes.clone(),
            entries,
        }
    }

    /// Entries of one (kind, SNR, cut-off) cell.
    pub fn cell(&self, kind: SampleKind, snr_db: f64, cutoff_db: Option<f64>) -> Result<Self> {
        let entries: Vec<ManifestEntry> = self
            .entries
            .iter()
            .filter(|e| e.kind == kind && e.snr_db == snr_db && e.cutoff_db == cutoff_db)
            .cloned()
            .collect();
        if entries.is_empty() {
            return Err(Error::MissingCell(format!(
                "{kind:?} at {snr_db} dB, cut-off {}",
                cutoff_label(cutoff_db)
            )));
        }
        Ok(self.with_entries(entries))
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn split_manifest(&self, split: Split) -> Self {
        self.with_entries(self.split(split).into_iter().cloned().collect())
    }

    /// Distinct SNR levels in ascending order.
    pub fn snr_levels(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.entries.iter().map(|e| e.snr_db).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Distinct spectrogram cut-offs, `None` first, then ascending.
    pub fn cutoffs(&self) -> Vec<Option<f64>> {
        let mut v: Vec<Option<f64>> = self
            .entries
            .iter()
            .filter(|e| e.kind == SampleKind::Spectrogram)
            .map(|e| e.cutoff_db)
            .collect();
        v.sort_by(|a, b| match (a, b) {
            (None, None) => std::cmp::Ordering::Equal,
            (None, _) => std::cmp::Ordering::Less,
            (_, None) => std::cmp::Ordering::Greater,
            (Some(x), Some(y)) => x.total_cmp(y),
        });
        v.dedup();
        v
    }

    /// Loads every entry's image, checking that all share one shape.
    pub fn load_images(&self, root: &Path) -> Result<ImageSet> {
        let first = self.entries.first().ok_or(Error::EmptyDataset)?;
        let mut set: Option<ImageSet> = None;
        for e in &self.entries {
            if e.kind != first.kind {
                return Err(Error::ShapeMismatch("entries mix spectrogram and time-series images".into()));
            }
            let path = root.join(&e.path);
            let (sample, shape) = match e.kind {
                SampleKind::Spectrogram => {
                    let img = RgbImage::load_png(&path)?;
                    (rgb_to_sample(&img), Shape3::new(3, img.height(), img.width()))
                }
                SampleKind::Timeseries => {
                    let img = GrayImage::load_png(&path)?;
                    (gray_to_sample(&img), Shape3::new(1, img.height(), img.width()))
                }
            };
            let set = set.get_or_insert_with(|| ImageSet::new(shape, self.num_classes()));
            if set.shape() != shape {
                return Err(Error::ShapeMismatch(format!(
                    "{} is {shape:?}, expected {:?}",
                    e.path,
                    set.shape()
                )));
            }
            set.push(&sample, e.class_id)?;
        }
        Ok(set.expect("at least one entry"))
    }
}

fn cutoff_label(cutoff_db: Option<f64>) -> String {
    cutoff_db.map_or_else(|| "none".into(), |c| format!("{c} dB/Hz"))
}

/// Union of the spectrogram cells at `snr_subset` and `cutoff_db`, keeping
/// each cell's train/test assignment.
pub fn merge_snr_sets(manifest: &DatasetManifest, snr_subset: &[f64], cutoff_db: Option<f64>) -> Result<DatasetManifest> {
    if snr_subset.is_empty() {
        return Err(Error::InvalidArg("empty SNR subset".into()));
    }
    let mut entries = Vec::new();
    for &snr in snr_subset {
        entries.extend(manifest.cell(SampleKind::Spectrogram, snr, cutoff_db)?.entries);
    }
    Ok(manifest.with_entries(entries))
}

/// Number of training captures per class for a 3:1 split.
pub fn train_count(per_class: usize) -> usize {
    (3 * per_class + 2) / 4
}

/// Capture indices assigned to the training split for one class.
fn train_indices(seed: u64, class_id: usize, per_class: usize) -> BTreeSet<usize> {
    let mut order: Vec<usize> = (0..per_class).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[u64::MAX, class_id as u64]));
    order.shuffle(&mut rng);
    order.into_iter().take(train_count(per_class)).collect()
}

pub fn check_profiles(profiles: &[ControllerProfile], sample_rate: f64) -> Result<()> {
    if profiles.len() < 2 {
        return Err(Error::InvalidArg("a corpus needs at least two profiles".into()));
    }
    for (i, p) in profiles.iter().enumerate() {
        if p.class_id != i {
            return Err(Error::InvalidArg(format!(
                "profile at position {i} has class id {}, ids must be 0..K-1 in order",
                p.class_id
            )));
        }
        p.validate(sample_rate)?;
    }
    Ok(())
}

/// Synthesizes, noises, renders and writes every image of the corpus, plus
/// `manifest.json` and `corpus_config.json`, under `out_dir`.
///
/// Each capture is noised once per SNR and that noisy record feeds every
/// cut-off and the time-series image. Train/test assignment is per capture,
/// so a test capture never appears in training at any SNR or cut-off.
pub fn build_corpus(profiles: &[ControllerProfile], config: &CorpusConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    check_profiles(profiles, config.sample_rate)?;
    let renderer = Renderer::new(config, profiles)?;
    let spec_dir = out_dir.join("spectrogram");
    let ts_dir = out_dir.join("timeseries");
    for d in [&spec_dir, &ts_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut entries = Vec::new();
    for p in profiles {
        let train = train_indices(config.seed, p.class_id, config.per_class);
        for index in 0..config.per_class {
            let split = if train.contains(&index) { Split::Train } else { Split::Test };
            let capture_seed = derive_seed(config.seed, &[p.class_id as u64, index as u64]);
            for &snr in &config.snr_grid {
                let (noisy, marks) = noisy_capture(p, config, capture_seed, snr)?;
                let spec = renderer.spectrogram(&noisy, marks)?;
                for &cutoff in &config.cutoff_grid {
                    let name = render::image_file_name(p.class_id, snr, cutoff, index);
                    renderer.spectrogram_image(&spec, cutoff)?.save_png(&spec_dir.join(&name))?;
                    entries.push(ManifestEntry {
                        path: format!("spectrogram/{name}"),
                        class_id: p.class_id,
                        snr_db: snr,
                        cutoff_db: cutoff,
                        split,
                        kind: SampleKind::Spectrogram,
                        seed: capture_seed,
                    });
                }
                if config.timeseries_size.is_some() {
                    let name = render::image_file_name(p.class_id, snr, None, index);
                    renderer.timeseries_image(&noisy, marks)?.save_png(&ts_dir.join(&name))?;
                    entries.push(ManifestEntry {
                        path: format!("timeseries/{name}"),
                        class_id: p.class_id,
                        snr_db: snr,
                        cutoff_db: None,
                        split,
                        kind: SampleKind::Timeseries,
                        seed: capture_seed,
                    });
                }
            }
        }
        log::info!("class {} rendered", p.class_id);
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        config_hash: config.hash(profiles),
        classes: profiles
            .iter()
            .map(|p| ClassInfo {
                id: p.class_id,
                name: p.name.clone(),
            })
            .collect(),
        entries,
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    let cfg_path = out_dir.join(CONFIG_FILE);
    let mut text = serde_json::to_string_pretty(&CorpusFile {
        config: config.clone(),
        profiles: profiles.to_vec(),
    })?;
    text.push('\n');
    std::fs::write(&cfg_path, text).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(manifest)
}

/// The configuration and profiles a corpus was built from, stored beside
/// its manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusFile {
    pub config: CorpusConfig,
    pub profiles: Vec<ControllerProfile>,
}

impl CorpusFile {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CONFIG_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Spectrogram images of `count` fresh captures of `profile`, cycling
/// through `snr_grid`, rendered exactly as the corpus renders them.
pub fn spectrogram_samples(
    renderer: &Renderer,
    profile: &ControllerProfile,
    snr_grid: &[f64],
    cutoff_db: Option<f64>,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if snr_grid.is_empty() {
        return Err(Error::InvalidArg("empty SNR grid".into()));
    }
    profile.validate(renderer.config().sample_rate)?;
    (0..count)
        .map(|i| {
            let capture_seed = derive_seed(seed, &[profile.class_id as u64, i as u64]);
            let snr = snr_grid[i % snr_grid.len()];
            let (noisy, marks) = noisy_capture(profile, renderer.config(), capture_seed, snr)?;
            let spec = renderer.spectrogram(&noisy, marks)?;
            Ok(rgb_to_sample(&renderer.spectrogram_image(&spec, cutoff_db)?))
        })
        .collect()
}
