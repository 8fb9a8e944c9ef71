//! Raster outputs: false-color spectrogram images and grayscale time-series
//! line plots, with PNG persistence and area resampling to classifier input
//! dimensions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{TimeSeriesSignal, TransientMarks};
use crate::spectro::Spectrogram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorMap {
    points: Vec<ControlPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub t: f64,
    pub rgb: [f64; 3],
}

impl ColorMap {
    pub fn new(points: Vec<ControlPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArg("color map needs at least 2 points".into()));
        }
        if points[0].t != 0.0 || points[points.len() - 1].t != 1.0 {
            return Err(Error::InvalidArg("color map must span t = 0..1".into()));
        }
        if points.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidArg("color map positions must increase".into()));
        }
        if points
            .iter()
            .flat_map(|p| p.rgb)
            .any(|c| !(0.0..=1.0).contains(&c))
        {
            return Err(Error::InvalidArg("color channels must lie in [0, 1]".into()));
        }
        Ok(Self { points })
    }

    /// Evenly spaced control points through the given colors.
    pub fn evenly_spaced(colors: &[[f64; 3]]) -> Result<Self> {
        if colors.len() < 2 {
            return Err(Error::InvalidArg("color map needs at least 2 colors".into()));
        }
        let last = (colors.len() - 1) as f64;
        let points = colors
            .iter()
            .enumerate()
            .map(|(i, &rgb)| ControlPoint {
                t: if i == colors.len() - 1 { 1.0 } else { i as f64 / last },
                rgb,
            })
            .collect();
        Self::new(points)
    }

    /// Black, blue, cyan, green, yellow, red, white.
    pub fn spectrum() -> Self {
        Self::evenly_spaced(&[
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 1.0, 1.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 1.0],
        ])
        .expect("built-in map is valid")
    }

    pub fn grayscale() -> Self {
        Self::evenly_spaced(&[[0.0; 3], [1.0; 3]]).expect("built-in map is valid")
    }

    pub fn points(&self) -> &[ControlPoint] {
        &self.points
    }

    /// Piecewise-linear color at `t`, clamped to `[0, 1]`, quantized to
    /// 8 bits with round-half-up.
    pub fn color_at(&self, t: f64) -> [u8; 3] {
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        let seg = self
            .points
            .windows(2)
            .position(|w| t <= w[1].t)
            .unwrap_or(self.points.len() - 2);
        let (a, b) = (self.points[seg], self.points[seg + 1]);
        let u = (t - a.t) / (b.t - a.t);
        let mut out = [0u8; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let v = a.rgb[c] + u * (b.rgb[c] - a.rgb[c]);
            *o = quantize(v);
        }
        out
    }
}

impl Default for ColorMap {
    fn default() -> Self {
        Self::spectrum()
    }
}

fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Which densities map to the ends of the color map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ColorScale {
    /// Per-image floor and ceiling.
    #[default]
    DataRelative,
    /// Fixed densities in dB/Hz; values outside are clamped.
    Absolute { floor_db: f64, ceil_db: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

macro_rules! image_common {
    ($ty:ty, $channels:expr) => {
        impl $ty {
            pub const CHANNELS: usize = $channels;

            pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
                if width == 0 || height == 0 {
                    return Err(Error::InvalidArg("image dimensions must be positive".into()));
                }
                if pixels.len() != width * height * $channels {
                    return Err(Error::LengthMismatch {
                        expected: width * height * $channels,
                        actual: pixels.len(),
                    });
                }
                Ok(Self {
                    width,
                    height,
                    pixels,
                })
            }

            pub fn filled(width: usize, height: usize, value: [u8; $channels]) -> Result<Self> {
                let pixels = value.repeat(width * height);
                Self::new(width, height, pixels)
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            /// Row-major interleaved channel bytes.
            pub fn pixels(&self) -> &[u8] {
                &self.pixels
            }

            pub fn pixel(&self, x: usize, y: usize) -> [u8; $channels] {
                let i = (y * self.width + x) * $channels;
                self.pixels[i..i + $channels].try_into().unwrap()
            }

            /// Area-weighted resampling to `width × height`.
            pub fn resize(&self, width: usize, height: usize) -> Result<Self> {
                if width == 0 || height == 0 {
                    return Err(Error::InvalidArg("image dimensions must be positive".into()));
                }
                if width == self.width && height == self.height {
                    return Ok(self.clone());
                }
                let pixels = resample(&self.pixels, self.width, self.height, $channels, width, height);
                Self::new(width, height, pixels)
            }

            pub fn save_png(&self, path: &Path) -> Result<()> {
                write_png(path, self.width, self.height, $channels, &self.pixels)
            }

            pub fn load_png(path: &Path) -> Result<Self> {
                let (w, h, px) = read_png(path, $channels)?;
                Self::new(w, h, px)
            }
        }
    };
}

image_common!(RgbImage, 3);
image_common!(GrayImage, 1);

/// Overlap of source cell `[i, i+1)` with the destination cell scaled into
/// source coordinates, for every (destination, source) pair with non-zero
/// weight.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let lo = d as f64 * scale;
            let hi = (d + 1) as f64 * scale;
            let mut w = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < src {
                let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    w.push((i, overlap / scale));
                }
                i += 1;
            }
            w
        })
        .collect()
}

fn resample(px: &[u8], w: usize, h: usize, ch: usize, nw: usize, nh: usize) -> Vec<u8> {
    let wx = axis_weights(w, nw);
    let wy = axis_weights(h, nh);
    // Horizontal pass into f64 rows, then vertical.
    let mut tmp = vec![0.0f64; h * nw * ch];
    for y in 0..h {
        for (dx, weights) in wx.iter().enumerate() {
            for c in 0..ch {
                tmp[(y * nw + dx) * ch + c] = weights
                    .iter()
                    .map(|&(sx, wt)| wt * px[(y * w + sx) * ch + c] as f64)
                    .sum();
            }
        }
    }
    let mut out = vec![0u8; nw * nh * ch];
    for (dy, weights) in wy.iter().enumerate() {
        for x in 0..nw {
            for c in 0..ch {
                let v: f64 = weights
                    .iter()
                    .map(|&(sy, wt)| wt * tmp[(sy * nw + x) * ch + c])
                    .sum();
                out[(dy * nw + x) * ch + c] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

fn write_png(path: &Path, w: usize, h: usize, ch: usize, px: &[u8]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w as u32, h as u32);
    enc.set_color(if ch == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    });
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| match e {
        png::EncodingError::IoError(e) => Error::io(path, e),
        other => Error::Format(format!("png encode: {other}")),
    };
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(px).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

fn read_png(path: &Path, ch: usize) -> Result<(usize, usize, Vec<u8>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let expected = if ch == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    };
    if info.color_type != expected || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "{}: expected 8-bit {:?}, found {:?} {:?}",
            path.display(),
            expected,
            info.bit_depth,
            info.color_type
        )));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, buf))
}

/// Maps each density to a color; image rows are frequency bins, columns are
/// time frames.
pub fn colormap_apply(spec: &Spectrogram, map: &ColorMap) -> RgbImage {
    colormap_apply_scaled(spec, map, ColorScale::DataRelative)
}

pub fn colormap_apply_scaled(spec: &Spectrogram, map: &ColorMap, scale: ColorScale) -> RgbImage {
    let (lo, hi) = match scale {
        ColorScale::DataRelative => (spec.floor_db(), spec.ceil_db()),
        ColorScale::Absolute { floor_db, ceil_db } => (floor_db, ceil_db),
    };
    let span = hi - lo;
    let mut pixels = Vec::with_capacity(spec.grid().len() * 3);
    for &v in spec.grid() {
        let t = if span > 0.0 { (v - lo) / span } else { 0.0 };
        pixels.extend_from_slice(&map.color_at(t));
    }
    RgbImage::new(spec.cols(), spec.rows(), pixels).expect("spectrogram is non-empty")
}

/// Line-plot geometry for time-series images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub width: usize,
    pub height: usize,
    /// The vertical axis spans `[-amplitude, amplitude]`.
    pub amplitude: f64,
    /// Samples of leading noise kept before the transient.
    pub margin: usize,
}

/// Plots `[t_b - margin, N)` as a 1-pixel black polyline on white.
pub fn render_timeseries(
    signal: &TimeSeriesSignal,
    plot: &PlotSpec,
    marks: TransientMarks,
) -> Result<GrayImage> {
    let (w, h) = (plot.width, plot.height);
    if w < 8 || h < 8 {
        return Err(Error::InvalidArg(format!("plot {w}x{h} is smaller than 8x8")));
    }
    if !(plot.amplitude.is_finite() && plot.amplitude > 0.0) {
        return Err(Error::InvalidArg("plot amplitude must be positive".into()));
    }
    let n = signal.len();
    if marks.t_b == 0 || marks.t_b > marks.t_e || marks.t_e >= n {
        return Err(Error::InvalidArg(format!("marks {marks:?} invalid for length {n}")));
    }
    let start = marks.t_b.saturating_sub(plot.margin);
    let x = &signal.samples()[start..];
    let mut pixels = vec![255u8; w * h];

    let last = (x.len() - 1).max(1) as f64;
    let to_px = |i: usize, v: f64| -> (i64, i64) {
        let px = (i as f64 / last * (w - 1) as f64).round() as i64;
        let t = ((v / plot.amplitude).clamp(-1.0, 1.0) + 1.0) / 2.0;
        let py = ((1.0 - t) * (h - 1) as f64).round() as i64;
        (px, py)
    };
    let mut prev = to_px(0, x[0]);
    plot_point(&mut pixels, w, prev);
    for (i, &v) in x.iter().enumerate().skip(1) {
        let p = to_px(i, v);
        draw_line(&mut pixels, w, prev, p);
        prev = p;
    }
    GrayImage::new(w, h, pixels)
}

fn plot_point(px: &mut [u8], w: usize, (x, y): (i64, i64)) {
    px[y as usize * w + x as usize] = 0;
}

fn draw_line(px: &mut [u8], w: usize, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        plot_point(px, w, (x0, y0));
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// `<class_id>_<snr_db>_<cutoff_db>_<index>.png`; a missing cut-off is
/// written as `none`.
pub fn image_file_name(class_id: usize, snr_db: f64, cutoff_db: Option<f64>, index: usize) -> String {
    let cutoff = cutoff_db.map_or_else(|| "none".to_string(), |c| format!("{c}"));
    format!("{class_id}_{snr_db}_{cutoff}_{index}.png")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectro::truncate;

    fn spec(values: Vec<f64>, rows: usize) -> Spectrogram {
        let cols = values.len() / rows;
        Spectrogram::from_grid(values, rows, 0, 1.0, (0..cols).map(|c| c as f64).collect()).unwrap()
    }

    #[test]
    fn colormap_rejects_bad_points() {
        let p = |t| ControlPoint { t, rgb: [0.0; 3] };
        assert!(ColorMap::new(vec![p(0.0)]).is_err());
        assert!(ColorMap::new(vec![p(0.1), p(1.0)]).is_err());
        assert!(ColorMap::new(vec![p(0.0), p(0.5), p(0.5), p(1.0)]).is_err());
        assert!(ColorMap::new(vec![p(0.0), p(1.0)]).is_ok());
    }

    #[test]
    fn floor_maps_to_first_color() {
        let s = spec(vec![-80.0, -40.0, -10.0, -50.0], 2);
        let img = colormap_apply(&s, &ColorMap::spectrum());
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixel(0, 0), [0, 0, 0]);
        assert_eq!(img.pixel(0, 1), [255, 255, 255]);
    }

    #[test]
    fn wiped_grid_is_uniform_first_color() {
        let s = truncate(&spec(vec![-80.0, -40.0, -10.0, -50.0], 2), 0.0);
        let map = ColorMap::new(vec![
            ControlPoint { t: 0.0, rgb: [0.2, 0.4, 0.6] },
            ControlPoint { t: 1.0, rgb: [1.0; 3] },
        ])
        .unwrap();
        let img = colormap_apply(&s, &map);
        assert!(img.pixels().chunks(3).all(|c| c == [51, 102, 153]));
    }

    #[test]
    fn midpoint_rounds_half_up() {
        let s = spec(vec![0.0, 5.0, 10.0], 1);
        let img = colormap_apply(&s, &ColorMap::grayscale());
        assert_eq!(img.pixel(1, 0), [128, 128, 128]);
    }

    #[test]
    fn spectrum_map_hits_control_colors() {
        let m = ColorMap::spectrum();
        assert_eq!(m.color_at(1.0 / 6.0), [0, 0, 255]);
        assert_eq!(m.color_at(0.5), [0, 255, 0]);
        assert_eq!(m.color_at(5.0 / 6.0), [255, 0, 0]);
        assert_eq!(m.color_at(2.0), [255, 255, 255]);
    }

    #[test]
    fn absolute_scale_clamp_commutes_with_truncation() {
        let vals: Vec<f64> = (0..40).map(|i| -120.0 + 3.0 * i as f64).collect();
        let s = spec(vals, 4);
        let map = ColorMap::spectrum();
        let scale = ColorScale::Absolute { floor_db: -130.0, ceil_db: 0.0 };
        let cutoff = -70.0;
        let a = colormap_apply_scaled(&truncate(&s, cutoff), &map, scale);
        let plain = colormap_apply_scaled(&s, &map, scale);
        let clamp_color = map.color_at((cutoff + 130.0) / 130.0);
        for (i, v) in s.grid().iter().enumerate() {
            let expect = if *v < cutoff {
                clamp_color
            } else {
                plain.pixels()[3 * i..3 * i + 3].try_into().unwrap()
            };
            assert_eq!(&a.pixels()[3 * i..3 * i + 3], &expect);
        }
    }

    fn plot(w: usize, h: usize) -> PlotSpec {
        PlotSpec { width: w, height: h, amplitude: 4.0, margin: 10 }
    }

    #[test]
    fn zero_signal_draws_midline() {
        let s = TimeSeriesSignal::new(vec![0.0; 500], 1.0).unwrap();
        let m = TransientMarks::new(100, 120, 500).unwrap();
        let img = render_timeseries(&s, &plot(40, 32), m).unwrap();
        assert_eq!((img.width(), img.height()), (40, 32));
        let dark_rows: Vec<usize> = (0..32)
            .filter(|&y| (0..40).any(|x| img.pixel(x, y)[0] < 255))
            .collect();
        assert_eq!(dark_rows.len(), 1);
        assert!((0..40).all(|x| img.pixel(x, dark_rows[0])[0] == 0));
    }

    fn ink_rows(img: &GrayImage) -> (usize, usize) {
        let rows: Vec<usize> = (0..img.height())
            .filter(|&y| (0..img.width()).any(|x| img.pixel(x, y)[0] == 0))
            .collect();
        (rows[0], *rows.last().unwrap())
    }

    #[test]
    fn halving_amplitude_halves_extent() {
        let x: Vec<f64> = (0..800).map(|i| 3.0 * (i as f64 * 0.3).sin()).collect();
        let half: Vec<f64> = x.iter().map(|v| v * 0.5).collect();
        let m = TransientMarks::new(50, 60, 800).unwrap();
        let p = plot(64, 101);
        let a = render_timeseries(&TimeSeriesSignal::new(x, 1.0).unwrap(), &p, m).unwrap();
        let b = render_timeseries(&TimeSeriesSignal::new(half, 1.0).unwrap(), &p, m).unwrap();
        let (a0, a1) = ink_rows(&a);
        let (b0, b1) = ink_rows(&b);
        let (ea, eb) = ((a1 - a0) as f64, (b1 - b0) as f64);
        assert!((eb - ea / 2.0).abs() <= 1.0, "{ea} vs {eb}");
    }

    #[test]
    fn degenerate_plot_rejected() {
        let s = TimeSeriesSignal::new(vec![0.0; 100], 1.0).unwrap();
        let m = TransientMarks::new(10, 10, 100).unwrap();
        assert!(render_timeseries(&s, &plot(4, 32), m).is_err());
    }

    #[test]
    fn resize_preserves_uniform_and_mean() {
        let img = RgbImage::filled(10, 7, [10, 200, 30]).unwrap();
        let r = img.resize(4, 3).unwrap();
        assert!(r.pixels().chunks(3).all(|c| c == [10, 200, 30]));
        let r = img.resize(23, 9).unwrap();
        assert!(r.pixels().chunks(3).all(|c| c == [10, 200, 30]));
        let g = GrayImage::new(4, 1, vec![0, 100, 200, 100]).unwrap();
        assert_eq!(g.resize(2, 1).unwrap().pixels(), &[50, 150]);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = RgbImage::new(3, 2, (0..18).collect()).unwrap();
        let p = dir.path().join("a.png");
        rgb.save_png(&p).unwrap();
        assert_eq!(RgbImage::load_png(&p).unwrap(), rgb);
        let gray = GrayImage::new(2, 2, vec![0, 64, 128, 255]).unwrap();
        let q = dir.path().join("b.png");
        gray.save_png(&q).unwrap();
        assert_eq!(GrayImage::load_png(&q).unwrap(), gray);
        assert!(matches!(RgbImage::load_png(&q), Err(Error::Format(_))));
    }

    #[test]
    fn file_names() {
        assert_eq!(image_file_name(3, -10.0, Some(-15.0), 7), "3_-10_-15_7.png");
        assert_eq!(image_file_name(0, 30.0, None, 0), "0_30_none_0.png");
    }
}
