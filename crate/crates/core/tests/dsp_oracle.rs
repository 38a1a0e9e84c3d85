mod common;

use common::*;
use focusloop::dsp::{band_power, relative_alpha, welch_psd, SampleWindow, Taper, WelchEstimator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: f64 = 256.0;
const N: usize = 512;

fn welch() -> WelchEstimator {
    WelchEstimator::new(256, 0.5, Taper::Hann).unwrap()
}

fn window_of(x: &[f64]) -> SampleWindow {
    let mut w = SampleWindow::new(x.len(), FS);
    for (i, &v) in x.iter().enumerate() {
        w.push((i as f64 * 1e6 / FS).round() as u64, v).unwrap();
    }
    w
}

#[test]
fn oracle_self_check_parseval() {
    let x = add(&sine(10.0, 1.0, FS, N), &sine(37.5, 0.3, FS, N));
    let p = dft_power(&x);
    assert!(rel_err(dft_total(&p), variance(&x)) < 1e-9);
    assert!(rel_err(dft_band(&p, FS, N, 9.9, 10.1), 0.5) < 1e-9);
}

#[test]
fn unit_sine_total_power_matches_oracle() {
    let x = sine(10.0, 1.0, FS, N);
    let oracle = dft_total(&dft_power(&x));
    let spec = welch_psd(&window_of(&x), 256, 0.5, Taper::Hann).unwrap();
    let total = spec.total_power();
    assert!(rel_err(oracle, 0.5) < 1e-9);
    assert!(
        rel_err(total, oracle) < 0.05,
        "welch {total} oracle {oracle}"
    );
}

#[test]
fn off_bin_sines_keep_total_power() {
    for f in [7.3, 10.25, 11.9, 22.2, 33.3] {
        let x = sine(f, 2.0, FS, N);
        let oracle = dft_total(&dft_power(&x));
        let total = welch().estimate_slice(&x, FS).total_power();
        assert!(
            rel_err(total, oracle) < 0.05,
            "{f} Hz: welch {total} oracle {oracle}"
        );
    }
}

#[test]
fn alpha_ratio_follows_oracle() {
    let cases = [
        (sine(10.0, 1.0, FS, N), 0.95, 1.0),
        (sine(20.0, 1.0, FS, N), 0.0, 0.05),
        (
            add(&sine(10.0, 1.0, FS, N), &sine(20.0, 1.0, FS, N)),
            0.4,
            0.6,
        ),
    ];
    for (x, lo, hi) in cases {
        let p = dft_power(&x);
        let oracle = dft_band(&p, FS, N, 8.0, 13.0) / dft_band(&p, FS, N, 1.0, 40.0);
        let got = relative_alpha(&welch().estimate_slice(&x, FS));
        assert!((lo..=hi).contains(&got), "ratio {got} outside [{lo}, {hi}]");
        assert!((got - oracle).abs() < 0.06, "ratio {got} oracle {oracle}");
    }
}

#[test]
fn white_noise_integrates_to_its_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..N).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let oracle = dft_total(&dft_power(&x));
    assert!(rel_err(oracle, variance(&x)) < 1e-9);
    let total = welch().estimate_slice(&x, FS).total_power();
    assert!(
        rel_err(total, oracle) < 0.15,
        "welch {total} oracle {oracle}"
    );
}

#[test]
fn scaling_the_signal_scales_power_and_keeps_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = sine(10.0, 1.0, FS, N)
        .into_iter()
        .map(|v| v + rng.gen_range(-1.0..1.0))
        .collect();
    let base = welch().estimate_slice(&x, FS);
    for c in [0.01, 3.0, 250.0] {
        let y: Vec<f64> = x.iter().map(|v| v * c).collect();
        let spec = welch().estimate_slice(&y, FS);
        assert!(rel_err(spec.total_power(), c * c * base.total_power()) < 1e-9);
        assert!((relative_alpha(&spec) - relative_alpha(&base)).abs() < 1e-12);
    }
}

#[test]
fn band_powers_add_up() {
    let x = add(&sine(6.0, 1.0, FS, N), &sine(10.3, 0.7, FS, N));
    let spec = welch().estimate_slice(&x, FS);
    let whole = band_power(&spec, 1.0, 40.0).unwrap().power;
    let parts: f64 = [(1.0, 8.0), (8.0, 13.0), (13.0, 40.0)]
        .iter()
        .map(|&(lo, hi)| band_power(&spec, lo, hi).unwrap().power)
        .sum();
    assert!(rel_err(parts, whole) < 1e-12);
}

#[test]
fn constant_signal_has_zero_ratio() {
    let x = vec![5.0; N];
    let spec = welch().estimate_slice(&x, FS);
    assert_eq!(spec.total_power(), 0.0);
    assert_eq!(relative_alpha(&spec), 0.0);
}
