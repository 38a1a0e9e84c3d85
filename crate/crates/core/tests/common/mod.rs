//! Reference implementations used as test oracles.

#![allow(dead_code)]

use std::f64::consts::PI;

/// `amp · sin(2π f t)` sampled at `fs` for `n` samples.
pub fn sine(freq_hz: f64, amp: f64, fs: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| amp * (2.0 * PI * freq_hz * i as f64 / fs).sin())
        .collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Direct O(n²) DFT of the mean-removed signal, reduced to one-sided power
/// per bin (µV², not density). The bins sum to the signal variance.
pub fn dft_power(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let n2 = (n * n) as f64;
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in x.iter().enumerate() {
                let ph = -2.0 * PI * (k * i % n) as f64 / n as f64;
                re += (v - mean) * ph.cos();
                im += (v - mean) * ph.sin();
            }
            let p = (re * re + im * im) / n2;
            if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

/// Sum of oracle bin powers whose centre lies in `[lo_hz, hi_hz]`.
pub fn dft_band(power: &[f64], fs: f64, n: usize, lo_hz: f64, hi_hz: f64) -> f64 {
    let df = fs / n as f64;
    power
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(k, _)| {
            let f = *k as f64 * df;
            f >= lo_hz && f <= hi_hz
        })
        .map(|(_, p)| p)
        .sum()
}

pub fn dft_total(power: &[f64]) -> f64 {
    power.iter().skip(1).sum()
}

pub fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}
