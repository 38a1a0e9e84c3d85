//! Welch power spectra and band integration.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{DspError, SampleWindow};

pub const ALPHA_BAND_HZ: (f64, f64) = (8.0, 13.0);
pub const BROADBAND_HZ: (f64, f64) = (1.0, 40.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Taper {
    #[default]
    Hann,
}

impl Taper {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Taper::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// One-sided power spectral density in µV²/Hz on bins `0, df, …, fs/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub frequencies_hz: Vec<f64>,
    pub power: Vec<f64>,
    pub resolution_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPower {
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub power: f64,
}

impl PowerSpectrum {
    pub fn nyquist_hz(&self) -> f64 {
        self.frequencies_hz.last().copied().unwrap_or(0.0)
    }

    /// Integrated power over `[0, Nyquist]` (DC excluded).
    pub fn total_power(&self) -> f64 {
        band_power(self, 0.0, self.nyquist_hz())
            .map(|b| b.power)
            .unwrap_or(0.0)
    }

    /// Density used for integration: the DC bin contributes nothing.
    fn density(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.power[k]
        }
    }

    /// Linearly interpolated density at `f`.
    fn density_at(&self, f: f64) -> f64 {
        let pos = f / self.resolution_hz;
        let k = (pos.floor() as usize).min(self.power.len() - 1);
        if k + 1 >= self.power.len() {
            return self.density(k);
        }
        let frac = pos - k as f64;
        self.density(k) * (1.0 - frac) + self.density(k + 1) * frac
    }
}

/// Reusable Welch estimator for a fixed segment length.
pub struct WelchEstimator {
    segment_len: usize,
    step: usize,
    taper: Vec<f64>,
    taper_energy: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for WelchEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WelchEstimator")
            .field("segment_len", &self.segment_len)
            .field("step", &self.step)
            .finish()
    }
}

impl WelchEstimator {
    pub fn new(segment_len: usize, overlap_fraction: f64, taper: Taper) -> Result<Self, DspError> {
        if segment_len < 2 || !segment_len.is_power_of_two() {
            return Err(DspError::BadSegmentLength(segment_len));
        }
        if !(0.0..1.0).contains(&overlap_fraction) {
            return Err(DspError::BadOverlap(overlap_fraction));
        }
        let overlap = (segment_len as f64 * overlap_fraction).round() as usize;
        let step = (segment_len - overlap).max(1);
        let taper = taper.coefficients(segment_len);
        let taper_energy = taper.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(segment_len);
        Ok(WelchEstimator {
            segment_len,
            step,
            taper,
            taper_energy,
            fft,
        })
    }

    pub fn segment_len(&self) -> usize {
        self.segment_len
    }

    /// Spectrum of a full window. The window mean is removed before tapering.
    pub fn estimate(&self, window: &SampleWindow) -> Result<PowerSpectrum, DspError> {
        if !window.is_full() {
            return Err(DspError::WindowNotFull {
                held: window.len(),
                capacity: window.capacity(),
            });
        }
        if self.segment_len > window.capacity() {
            return Err(DspError::BadSegmentLength(self.segment_len));
        }
        let samples: Vec<f64> = window.values().collect();
        Ok(self.estimate_slice(&samples, window.sample_rate_hz()))
    }

    pub fn estimate_slice(&self, samples: &[f64], sample_rate_hz: f64) -> PowerSpectrum {
        let n = self.segment_len;
        let bins = n / 2 + 1;
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let mut acc = vec![0.0; bins];
        let mut segments = 0usize;
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut start = 0;
        while start + n <= samples.len() {
            for (slot, (x, w)) in buf
                .iter_mut()
                .zip(samples[start..start + n].iter().zip(&self.taper))
            {
                *slot = Complex::new((x - mean) * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (a, c) in acc.iter_mut().zip(&buf) {
                *a += c.norm_sqr();
            }
            segments += 1;
            start += self.step;
        }
        let scale = 1.0 / (sample_rate_hz * self.taper_energy * segments.max(1) as f64);
        let power = acc
            .iter()
            .enumerate()
            .map(|(k, p)| {
                // one-sided: double everything except DC and Nyquist
                let fold = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
                p * scale * fold
            })
            .collect();
        let resolution_hz = sample_rate_hz / n as f64;
        PowerSpectrum {
            frequencies_hz: (0..bins).map(|k| k as f64 * resolution_hz).collect(),
            power,
            resolution_hz,
        }
    }
}

/// Mean of Hann-tapered, overlapped periodograms over a full window.
pub fn welch_psd(
    window: &SampleWindow,
    segment_len: usize,
    overlap_fraction: f64,
    taper: Taper,
) -> Result<PowerSpectrum, DspError> {
    WelchEstimator::new(segment_len, overlap_fraction, taper)?.estimate(window)
}

/// Trapezoidal integral of the density over `[lo_hz, hi_hz]`, interpolating
/// linearly at edges that fall between bins.
pub fn band_power(spectrum: &PowerSpectrum, lo_hz: f64, hi_hz: f64) -> Result<BandPower, DspError> {
    let max = spectrum.nyquist_hz();
    if !(lo_hz >= 0.0 && lo_hz < hi_hz && hi_hz <= max + 1e-9) || spectrum.power.len() < 2 {
        return Err(DspError::BadBand { lo_hz, hi_hz });
    }
    let hi_hz = hi_hz.min(max);
    let df = spectrum.resolution_hz;
    // Breakpoints: lo, every bin strictly inside, hi.
    let first = (lo_hz / df).floor() as usize + 1;
    let last = (hi_hz / df).ceil() as usize;
    let mut power = 0.0;
    let mut prev_f = lo_hz;
    let mut prev_p = spectrum.density_at(lo_hz);
    for k in first..last {
        let f = k as f64 * df;
        if f <= lo_hz || f >= hi_hz {
            continue;
        }
        let p = spectrum.density(k);
        power += 0.5 * (prev_p + p) * (f - prev_f);
        prev_f = f;
        prev_p = p;
    }
    let p_hi = spectrum.density_at(hi_hz);
    power += 0.5 * (prev_p + p_hi) * (hi_hz - prev_f);
    Ok(BandPower {
        lo_hz,
        hi_hz,
        power: power.max(0.0),
    })
}

/// Alpha (8–13 Hz) over broadband (1–40 Hz, capped at Nyquist) power; 0 when
/// the broadband power is 0.
pub fn relative_alpha(spectrum: &PowerSpectrum) -> f64 {
    let nyq = spectrum.nyquist_hz();
    let (lo, hi) = BROADBAND_HZ;
    if nyq <= ALPHA_BAND_HZ.1 {
        return 0.0;
    }
    let (Ok(alpha), Ok(broad)) = (
        band_power(spectrum, ALPHA_BAND_HZ.0, ALPHA_BAND_HZ.1),
        band_power(spectrum, lo, hi.min(nyq)),
    ) else {
        return 0.0;
    };
    if broad.power <= 0.0 {
        return 0.0;
    }
    (alpha.power / broad.power).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(n: usize, df: f64, level: f64) -> PowerSpectrum {
        PowerSpectrum {
            frequencies_hz: (0..n).map(|k| k as f64 * df).collect(),
            power: vec![level; n],
            resolution_hz: df,
        }
    }

    #[test]
    fn band_power_on_flat_density_is_width_times_level() {
        let s = flat(129, 1.0, 2.0);
        let b = band_power(&s, 8.0, 13.0).unwrap();
        assert!((b.power - 10.0).abs() < 1e-12);
        let b = band_power(&s, 8.25, 12.5).unwrap();
        assert!((b.power - 8.5).abs() < 1e-12);
    }

    #[test]
    fn dc_bin_is_excluded() {
        let mut s = flat(129, 1.0, 0.0);
        s.power[0] = 100.0;
        assert_eq!(band_power(&s, 0.0, 5.0).unwrap().power, 0.0);
        assert_eq!(s.total_power(), 0.0);
    }

    #[test]
    fn band_power_is_additive_across_edges() {
        let s = PowerSpectrum {
            frequencies_hz: (0..129).map(|k| k as f64 * 0.5).collect(),
            power: (0..129).map(|k| ((k * 37) % 11) as f64).collect(),
            resolution_hz: 0.5,
        };
        let whole = band_power(&s, 1.0, 40.0).unwrap().power;
        for cut in [8.0, 8.3, 13.0, 20.77] {
            let a = band_power(&s, 1.0, cut).unwrap().power;
            let b = band_power(&s, cut, 40.0).unwrap().power;
            assert!((a + b - whole).abs() < 1e-9 * whole, "cut {cut}");
        }
    }

    #[test]
    fn bad_band_rejected() {
        let s = flat(129, 1.0, 1.0);
        assert!(band_power(&s, 13.0, 8.0).is_err());
        assert!(band_power(&s, -1.0, 8.0).is_err());
        assert!(band_power(&s, 1.0, 129.0).is_err());
        assert!(band_power(&s, 1.0, 128.0).is_ok());
    }

    #[test]
    fn bad_segment_lengths() {
        assert!(matches!(
            WelchEstimator::new(100, 0.5, Taper::Hann),
            Err(DspError::BadSegmentLength(100))
        ));
        assert!(matches!(
            WelchEstimator::new(256, 1.0, Taper::Hann),
            Err(DspError::BadOverlap(_))
        ));
    }

    #[test]
    fn relative_alpha_degenerate_is_zero() {
        assert_eq!(relative_alpha(&flat(129, 1.0, 0.0)), 0.0);
    }
}
