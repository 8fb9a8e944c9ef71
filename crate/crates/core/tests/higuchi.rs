use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rfclass::signal::{self, TimeSeriesSignal};

/// Textbook Higuchi estimate with 1-based offsets `m = 1..=k`, fitted by
/// regressing `ln L(k)` on `ln k` and negating the slope.
fn reference_fd(x: &[f64], k_max: usize) -> f64 {
    let n = x.len();
    let mut pts = Vec::new();
    for k in 1..=k_max {
        let mut lk = 0.0;
        for m in 1..=k {
            let count = (n - m) / k;
            let sum: f64 = (1..=count).map(|i| (x[m - 1 + i * k] - x[m - 1 + (i - 1) * k]).abs()).sum();
            lk += sum * (n - 1) as f64 / (count * k) as f64 / k as f64;
        }
        pts.push(((k as f64).ln(), (lk / k as f64).ln()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    -num / den
}

#[test]
fn white_noise_dimension_near_two() {
    let mut total = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..4096).map(|_| rng.sample(StandardNormal)).collect();
        let fd = signal::higuchi_fd(&x, 8).unwrap();
        let oracle = reference_fd(&x, 8);
        assert!((fd - oracle).abs() < 1e-9, "{fd} vs {oracle}");
        assert!((1.85..=2.05).contains(&fd), "seed {seed}: {fd}");
        total += fd;
    }
    assert!((1.9..=2.02).contains(&(total / 20.0)));
}

#[test]
fn ramp_matches_reference() {
    let x: Vec<f64> = (0..512).map(|i| i as f64).collect();
    let fd = signal::higuchi_fd(&x, 8).unwrap();
    assert!((fd - reference_fd(&x, 8)).abs() < 1e-9);
    assert!((0.95..=1.05).contains(&fd));
}

#[test]
fn detector_localizes_burst_onset() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 8192;
    let onset = 2000;
    let x: Vec<f64> = (0..n)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            if i >= onset {
                z + 40.0 * (2.0 * std::f64::consts::PI * 0.01 * i as f64).sin()
            } else {
                z
            }
        })
        .collect();
    let sig = TimeSeriesSignal::new(x, 1e6).unwrap();
    let marks = signal::detect_transient(&sig, 1024, 256).unwrap();
    assert!(marks.t_b.abs_diff(onset) <= 1024, "{marks:?}");
}
