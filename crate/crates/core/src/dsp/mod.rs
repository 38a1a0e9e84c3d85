//! Sliding sample windows, Welch spectra and the relative-alpha metric.

mod spectrum;

pub use spectrum::{
    band_power, relative_alpha, welch_psd, BandPower, PowerSpectrum, Taper, WelchEstimator,
    ALPHA_BAND_HZ, BROADBAND_HZ,
};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{RawFrame, StreamDescriptor, StreamKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DspError {
    #[error("timestamp {t_us} does not follow {last_us}")]
    TimestampRegression { t_us: u64, last_us: u64 },
    #[error("window holds {held} of {capacity} samples")]
    WindowNotFull { held: usize, capacity: usize },
    #[error("segment length {0} must be a power of two no larger than the window")]
    BadSegmentLength(usize),
    #[error("overlap fraction {0} outside [0, 1)")]
    BadOverlap(f64),
    #[error("band [{lo_hz}, {hi_hz}] Hz is empty or beyond the spectrum")]
    BadBand { lo_hz: f64, hi_hz: f64 },
    #[error("frame carries {found} channels, expected {expected}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("channel index {0} out of range")]
    BadChannel(usize),
    #[error("window capacity must be positive")]
    EmptyWindow,
}

/// Ring of the most recent `capacity` samples of one channel.
#[derive(Debug, Clone)]
pub struct SampleWindow {
    capacity: usize,
    sample_rate_hz: f64,
    samples: VecDeque<(u64, f64)>,
}

impl SampleWindow {
    pub fn new(capacity: usize, sample_rate_hz: f64) -> Self {
        SampleWindow {
            capacity,
            sample_rate_hz,
            samples: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() >= self.capacity
    }

    pub fn last_timestamp_us(&self) -> Option<u64> {
        self.samples.back().map(|s| s.0)
    }

    /// Stores a sample, evicting the oldest when full. Returns whether the
    /// window now holds `capacity` samples.
    pub fn push(&mut self, t_us: u64, v: f64) -> Result<bool, DspError> {
        if let Some(last_us) = self.last_timestamp_us() {
            if t_us <= last_us {
                return Err(DspError::TimestampRegression { t_us, last_us });
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((t_us, v));
        Ok(self.is_full())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub window_s: f64,
    pub segment_len: usize,
    pub overlap_fraction: f64,
    pub taper: Taper,
    /// Metric recomputation rate.
    pub update_hz: f64,
    /// Channel indices averaged into the metric; `None` means all channels.
    pub channels: Option<Vec<usize>>,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            window_s: 2.0,
            segment_len: 256,
            overlap_fraction: 0.5,
            taper: Taper::Hann,
            update_hz: 10.0,
            channels: None,
        }
    }
}

impl DspConfig {
    pub fn window_capacity(&self, sample_rate_hz: f64) -> usize {
        (self.window_s * sample_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !(self.window_s > 0.0) {
            return Err(("dsp.window_s", "must be positive".into()));
        }
        if self.segment_len < 2 || !self.segment_len.is_power_of_two() {
            return Err(("dsp.segment_len", "must be a power of two".into()));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(("dsp.overlap_fraction", "must lie in [0, 1)".into()));
        }
        if !(self.update_hz > 0.0) {
            return Err(("dsp.update_hz", "must be positive".into()));
        }
        if matches!(&self.channels, Some(c) if c.is_empty()) {
            return Err(("dsp.channels", "subset must not be empty".into()));
        }
        Ok(())
    }
}

/// Per-channel windows for an EEG stream plus the shared Welch estimator.
#[derive(Debug)]
pub struct ChannelBank {
    windows: Vec<SampleWindow>,
    selected: Vec<usize>,
    welch: WelchEstimator,
}

impl ChannelBank {
    pub fn new(config: &DspConfig, desc: &StreamDescriptor) -> Result<Self, DspError> {
        let capacity = config.window_capacity(desc.sample_rate_hz);
        if capacity == 0 {
            return Err(DspError::EmptyWindow);
        }
        if config.segment_len > capacity {
            return Err(DspError::BadSegmentLength(config.segment_len));
        }
        let selected = match &config.channels {
            Some(c) => c.clone(),
            None => (0..desc.channel_count).collect(),
        };
        if let Some(&bad) = selected.iter().find(|&&c| c >= desc.channel_count) {
            return Err(DspError::BadChannel(bad));
        }
        Ok(ChannelBank {
            windows: (0..desc.channel_count)
                .map(|_| SampleWindow::new(capacity, desc.sample_rate_hz))
                .collect(),
            selected,
            welch: WelchEstimator::new(config.segment_len, config.overlap_fraction, config.taper)?,
        })
    }

    pub fn push_frame(&mut self, frame: &RawFrame) -> Result<(), DspError> {
        debug_assert_eq!(frame.stream_kind, StreamKind::Eeg);
        if frame.values.len() != self.windows.len() {
            return Err(DspError::ChannelMismatch {
                expected: self.windows.len(),
                found: frame.values.len(),
            });
        }
        for (w, &v) in self.windows.iter_mut().zip(&frame.values) {
            w.push(frame.timestamp_us, v as f64)?;
        }
        Ok(())
    }

    pub fn is_ready(&self) -> bool {
        self.selected.iter().all(|&c| self.windows[c].is_full())
    }

    pub fn window(&self, channel: usize) -> Option<&SampleWindow> {
        self.windows.get(channel)
    }

    /// Mean relative alpha over the selected channels, once their windows
    /// are full.
    pub fn relative_alpha(&self) -> Option<f64> {
        if !self.is_ready() {
            return None;
        }
        let sum: f64 = self
            .selected
            .iter()
            .map(|&c| {
                self.welch
                    .estimate(&self.windows[c])
                    .map(|s| relative_alpha(&s))
                    .unwrap_or(0.0)
            })
            .sum();
        Some(sum / self.selected.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ready_flag_flips_at_capacity() {
        let mut w = SampleWindow::new(4, 256.0);
        let flags: Vec<bool> = (1..=5).map(|t| w.push(t, t as f64).unwrap()).collect();
        assert_eq!(flags, vec![false, false, false, true, true]);
    }

    #[test]
    fn equal_timestamp_rejected() {
        let mut w = SampleWindow::new(4, 256.0);
        w.push(10, 0.0).unwrap();
        assert_eq!(
            w.push(10, 1.0),
            Err(DspError::TimestampRegression {
                t_us: 10,
                last_us: 10
            })
        );
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn ring_keeps_most_recent() {
        let mut w = SampleWindow::new(3, 256.0);
        for t in 1..=7 {
            w.push(t, t as f64).unwrap();
        }
        assert_eq!(w.values().collect::<Vec<_>>(), vec![5.0, 6.0, 7.0]);
    }

    #[test]
    fn welch_requires_full_window() {
        let mut w = SampleWindow::new(512, 256.0);
        w.push(0, 1.0).unwrap();
        assert!(matches!(
            welch_psd(&w, 256, 0.5, Taper::Hann),
            Err(DspError::WindowNotFull {
                held: 1,
                capacity: 512
            })
        ));
        let mut small = SampleWindow::new(128, 256.0);
        for t in 0..128 {
            small.push(t, 0.0).unwrap();
        }
        assert!(matches!(
            welch_psd(&small, 256, 0.5, Taper::Hann),
            Err(DspError::BadSegmentLength(256))
        ));
    }

    #[test]
    fn zero_signal_has_zero_spectrum() {
        let mut w = SampleWindow::new(512, 256.0);
        for t in 0..512 {
            w.push(t, 0.0).unwrap();
        }
        let s = welch_psd(&w, 256, 0.5, Taper::Hann).unwrap();
        assert_eq!(s.power.len(), 129);
        assert_eq!(s.resolution_hz, 1.0);
        assert!(s.power.iter().all(|&p| p == 0.0));
        assert_eq!(relative_alpha(&s), 0.0);
    }

    #[test]
    fn bank_rejects_bad_channel_subset() {
        let cfg = DspConfig {
            channels: Some(vec![8]),
            ..DspConfig::default()
        };
        assert!(matches!(
            ChannelBank::new(&cfg, &StreamDescriptor::default_eeg()),
            Err(DspError::BadChannel(8))
        ));
    }
}
