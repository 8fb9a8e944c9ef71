//! Windowed periodograms, Welch PSD estimates and STFT spectrograms in dB/Hz,
//! plus the two image-space operations applied to spectrograms: band
//! cropping and truncation at a cut-off density.

use std::io::{Read, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TimeSeriesSignal;

/// dB value substituted for bins whose linear density is zero.
pub const ZERO_DENSITY_DB: f64 = -300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hanning,
    Rectangular,
}

/// How a periodogram is normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `|X|² / (fs · Σw²)`: a spectral density in units²/Hz.
    #[default]
    Density,
    /// `|X|² / M`, without window-power or sample-rate correction.
    PerSample,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sides {
    /// Bins `0..=M/2`, interior bins doubled.
    #[default]
    OneSided,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub size: usize,
    pub hop: usize,
    pub kind: WindowKind,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub sides: Sides,
}

impl Default for WindowSpec {
    /// 128-sample Hanning window advanced 16 samples per frame.
    fn default() -> Self {
        Self::new(128, 16, WindowKind::Hanning)
    }
}

impl WindowSpec {
    pub fn new(size: usize, hop: usize, kind: WindowKind) -> Self {
        Self {
            size,
            hop,
            kind,
            scaling: Scaling::Density,
            sides: Sides::OneSided,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidArg("window size must be positive".into()));
        }
        if self.hop == 0 || self.hop > self.size {
            return Err(Error::InvalidArg(format!(
                "hop {} must lie in 1..={}",
                self.hop, self.size
            )));
        }
        Ok(())
    }

    /// Number of frequency bins each periodogram produces.
    pub fn bins(&self) -> usize {
        match self.sides {
            Sides::OneSided => self.size / 2 + 1,
            Sides::TwoSided => self.size,
        }
    }

    /// Number of hops that fit in `n` samples.
    pub fn frames(&self, n: usize) -> usize {
        if n < self.size {
            0
        } else {
            (n - self.size) / self.hop + 1
        }
    }
}

/// Periodic (DFT-even) Hanning or rectangular window of `spec.size` points.
pub fn make_window(spec: &WindowSpec) -> Result<Vec<f64>> {
    if spec.size == 0 {
        return Err(Error::InvalidArg("window size must be positive".into()));
    }
    let m = spec.size;
    Ok(match spec.kind {
        WindowKind::Rectangular => vec![1.0; m],
        WindowKind::Hanning => (0..m)
            .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / m as f64).cos()))
            .collect(),
    })
}

/// Reusable FFT plan, window and normalization for one block size.
pub struct Periodogram {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    norm: f64,
    sides: Sides,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Periodogram {
    pub fn new(window: Vec<f64>, sample_rate: f64, scaling: Scaling, sides: Sides) -> Result<Self> {
        let m = window.len();
        if m == 0 {
            return Err(Error::InvalidArg("empty window".into()));
        }
        let norm = match scaling {
            Scaling::Density => {
                let energy: f64 = window.iter().map(|w| w * w).sum();
                if energy <= 0.0 {
                    return Err(Error::InvalidArg("window has zero energy".into()));
                }
                1.0 / (sample_rate * energy)
            }
            Scaling::PerSample => 1.0 / m as f64,
        };
        let fft = FftPlanner::new().plan_fft_forward(m);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Ok(Self {
            fft,
            window,
            norm,
            sides,
            buf: vec![Complex::default(); m],
            scratch,
        })
    }

    pub fn for_spec(spec: &WindowSpec, sample_rate: f64) -> Result<Self> {
        spec.validate()?;
        Self::new(make_window(spec)?, sample_rate, spec.scaling, spec.sides)
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn bins(&self) -> usize {
        match self.sides {
            Sides::OneSided => self.len() / 2 + 1,
            Sides::TwoSided => self.len(),
        }
    }

    /// Writes the linear periodogram of `block` into `out`.
    pub fn compute_into(&mut self, block: &[f64], out: &mut [f64]) -> Result<()> {
        let m = self.len();
        if block.len() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                actual: block.len(),
            });
        }
        debug_assert_eq!(out.len(), self.bins());
        for ((b, &x), &w) in self.buf.iter_mut().zip(block).zip(&self.window) {
            *b = Complex::new(w * x, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (o, c) in out.iter_mut().zip(&self.buf) {
            *o = c.norm_sqr() * self.norm;
        }
        if self.sides == Sides::OneSided {
            // Interior bins absorb their negative-frequency mirror; the
            // Nyquist bin exists only for even sizes.
            let last = if m.is_multiple_of(2) { m / 2 } else { out.len() };
            for o in out.iter_mut().take(last).skip(1) {
                *o *= 2.0;
            }
        }
        Ok(())
    }

    pub fn compute(&mut self, block: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.bins()];
        self.compute_into(block, &mut out)?;
        Ok(out)
    }
}

/// One-sided density periodogram `|DFT(w⊙block)|² / (fs·Σw²)` in linear
/// units.
pub fn block_periodogram(block: &[f64], window: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    if block.len() != window.len() {
        return Err(Error::LengthMismatch {
            expected: window.len(),
            actual: block.len(),
        });
    }
    Periodogram::new(window.to_vec(), sample_rate, Scaling::Density, Sides::OneSided)?
        .compute(block)
}

pub fn density_to_db(v: f64) -> f64 {
    if v > 0.0 {
        10.0 * v.log10()
    } else {
        ZERO_DENSITY_DB
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    /// Spectral density in dB/Hz per bin.
    pub values: Vec<f64>,
    pub bin_hz: f64,
    pub block_count: usize,
}

/// Welch estimate: mean of the block periodograms over every hop.
pub fn welch_psd(signal: &TimeSeriesSignal, spec: &WindowSpec) -> Result<PsdEstimate> {
    spec.validate()?;
    let x = signal.samples();
    if x.len() < spec.size {
        return Err(Error::SignalTooShort {
            len: x.len(),
            needed: spec.size,
        });
    }
    let mut pg = Periodogram::for_spec(spec, signal.sample_rate())?;
    let k = spec.frames(x.len());
    let mut acc = vec![0.0; pg.bins()];
    let mut block = vec![0.0; pg.bins()];
    for m in 0..k {
        let start = m * spec.hop;
        pg.compute_into(&x[start..start + spec.size], &mut block)?;
        for (a, b) in acc.iter_mut().zip(&block) {
            *a += b;
        }
    }
    Ok(PsdEstimate {
        values: acc.into_iter().map(|v| density_to_db(v / k as f64)).collect(),
        bin_hz: signal.sample_rate() / spec.size as f64,
        block_count: k,
    })
}

/// Time × frequency density matrix in dB/Hz.
///
/// Stored frequency-major: row `r` is bin `first_bin + r`, column `c` is the
/// frame starting at `frame_times[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    grid: Vec<f64>,
    rows: usize,
    cols: usize,
    first_bin: usize,
    bin_hz: f64,
    frame_times: Vec<f64>,
    floor_db: f64,
    ceil_db: f64,
}

impl Spectrogram {
    /// Builds a spectrogram from a frequency-major grid, computing its
    /// floor and ceiling.
    pub fn from_grid(
        grid: Vec<f64>,
        rows: usize,
        first_bin: usize,
        bin_hz: f64,
        frame_times: Vec<f64>,
    ) -> Result<Self> {
        let cols = frame_times.len();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArg("spectrogram must be non-empty".into()));
        }
        if grid.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: grid.len(),
            });
        }
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArg("spectrogram entries must be finite".into()));
        }
        let (floor_db, ceil_db) = min_max(&grid);
        Ok(Self {
            grid,
            rows,
            cols,
            first_bin,
            bin_hz,
            frame_times,
            floor_db,
            ceil_db,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.grid[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.grid[row * self.cols..(row + 1) * self.cols]
    }

    pub fn first_bin(&self) -> usize {
        self.first_bin
    }

    pub fn bin_hz(&self) -> f64 {
        self.bin_hz
    }

    pub fn row_freq_hz(&self, row: usize) -> f64 {
        (self.first_bin + row) as f64 * self.bin_hz
    }

    pub fn frame_times(&self) -> &[f64] {
        &self.frame_times
    }

    pub fn floor_db(&self) -> f64 {
        self.floor_db
    }

    pub fn ceil_db(&self) -> f64 {
        self.ceil_db
    }

    /// Keeps only the columns in `range`.
    pub fn slice_frames(&self, range: std::ops::Range<usize>) -> Result<Spectrogram> {
        if range.start >= range.end || range.end > self.cols {
            return Err(Error::InvalidRange {
                lo: range.start,
                hi: range.end,
                len: self.cols,
            });
        }
        let mut grid = Vec::with_capacity(self.rows * range.len());
        for r in 0..self.rows {
            grid.extend_from_slice(&self.row(r)[range.clone()]);
        }
        Spectrogram::from_grid(
            grid,
            self.rows,
            self.first_bin,
            self.bin_hz,
            self.frame_times[range].to_vec(),
        )
    }

    /// CSV export: one line per frequency bin, one field per frame, nine
    /// significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|v| format!("{v:.8e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// `RFSP` container: magic, version, then (rows, cols) and
    /// (first_bin, reserved) as u64 pairs, bin width, frame times and the
    /// row-major grid, all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = [0u8; 16];
        header[..4].copy_from_slice(SPECTRO_MAGIC);
        header[4..6].copy_from_slice(&SPECTRO_VERSION.to_le_bytes());
        w.write_all(&header)?;
        for v in [self.rows as u64, self.cols as u64, self.first_bin as u64, 0] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(8 * (1 + self.cols + self.grid.len()));
        buf.extend_from_slice(&self.bin_hz.to_le_bytes());
        for v in self.frame_times.iter().chain(&self.grid) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Spectrogram> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::Format(format!("reading RFSP: {e}")))?;
        if bytes.len() < 56 || &bytes[..4] != SPECTRO_MAGIC {
            return Err(Error::Format("missing RFSP header".into()));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[16 + 8 * i..24 + 8 * i].try_into().unwrap());
        let (rows, cols, first_bin) = (word(0) as usize, word(1) as usize, word(2) as usize);
        let body = &bytes[48..];
        let expected = 8 * (1 + cols + rows * cols);
        if body.len() != expected {
            return Err(Error::Format(format!(
                "RFSP body is {} bytes, expected {expected}",
                body.len()
            )));
        }
        let vals: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Spectrogram::from_grid(
            vals[1 + cols..].to_vec(),
            rows,
            first_bin,
            vals[0],
            vals[1..1 + cols].to_vec(),
        )
    }
}

const SPECTRO_MAGIC: &[u8; 4] = b"RFSP";
const SPECTRO_VERSION: u16 = 1;

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Short-time spectrogram: one column per hop, each the block periodogram
/// in dB/Hz.
pub fn stft_spectrogram(signal: &TimeSeriesSignal, spec: &WindowSpec) -> Result<Spectrogram> {
    spec.validate()?;
    let x = signal.samples();
    if x.len() < spec.size {
        return Err(Error::SignalTooShort {
            len: x.len(),
            needed: spec.size,
        });
    }
    let fs = signal.sample_rate();
    let mut pg = Periodogram::for_spec(spec, fs)?;
    let cols = spec.frames(x.len());
    let rows = pg.bins();
    let mut grid = vec![0.0; rows * cols];
    let mut column = vec![0.0; rows];
    for c in 0..cols {
        let start = c * spec.hop;
        pg.compute_into(&x[start..start + spec.size], &mut column)?;
        for (r, v) in column.iter().enumerate() {
            grid[r * cols + c] = density_to_db(*v);
        }
    }
    let frame_times = (0..cols).map(|c| (c * spec.hop) as f64 / fs).collect();
    Spectrogram::from_grid(grid, rows, 0, fs / spec.size as f64, frame_times)
}

/// Keeps the frequency rows whose bin frequency lies in `[f_lo, f_hi]`.
pub fn crop_band(spec: &Spectrogram, f_lo: f64, f_hi: f64) -> Result<Spectrogram> {
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo < 0.0 || f_lo >= f_hi {
        return Err(Error::EmptyBand { f_lo, f_hi });
    }
    let keep: Vec<usize> = (0..spec.rows)
        .filter(|&r| {
            let f = spec.row_freq_hz(r);
            f >= f_lo && f <= f_hi
        })
        .collect();
    let (Some(&first), Some(&last)) = (keep.first(), keep.last()) else {
        return Err(Error::EmptyBand { f_lo, f_hi });
    };
    let grid = spec.grid[first * spec.cols..(last + 1) * spec.cols].to_vec();
    Spectrogram::from_grid(
        grid,
        last + 1 - first,
        spec.first_bin + first,
        spec.bin_hz,
        spec.frame_times.clone(),
    )
}

/// Raises every entry below `cutoff_db` to `cutoff_db`.
pub fn truncate(spec: &Spectrogram, cutoff_db: f64) -> Spectrogram {
    let grid: Vec<f64> = spec.grid.iter().map(|&v| if v < cutoff_db { cutoff_db } else { v }).collect();
    let (floor_db, ceil_db) = min_max(&grid);
    Spectrogram {
        grid,
        floor_db,
        ceil_db,
        frame_times: spec.frame_times.clone(),
        ..*spec
    }
}
