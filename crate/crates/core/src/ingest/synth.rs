//! Seeded synthetic EEG and gaze sources.
//!
//! An EEG channel at time `t` carries `Σ amplitude_k(t) · sin(2π f_k t)` plus
//! zero-mean uniform noise in `[-noise, +noise]`. Every channel shares the
//! sinusoids and draws its own noise. Gaze follows a piecewise-constant script.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DescriptorError, RawFrame, StreamDescriptor, StreamKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("EEG profile has no components and zero noise")]
    EmptyProfile,
    #[error("duration must be positive, got {0}")]
    BadDuration(f64),
    #[error("invalid amplitude schedule: {0}")]
    BadSchedule(String),
    #[error("invalid gaze script: {0}")]
    BadGazeScript(String),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

/// Piecewise-linear amplitude in µV over session time, given as `(t_s, µV)`
/// knots. Held constant before the first and after the last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AmplitudeSchedule(pub Vec<(f64, f64)>);

impl AmplitudeSchedule {
    pub fn constant(uv: f64) -> Self {
        AmplitudeSchedule(vec![(0.0, uv)])
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.0.is_empty() {
            return Err(SynthError::BadSchedule("no knots".into()));
        }
        for w in self.0.windows(2) {
            if w[1].0 < w[0].0 {
                return Err(SynthError::BadSchedule(format!(
                    "knot times decrease at t={}",
                    w[1].0
                )));
            }
        }
        if let Some(&(t, v)) = self.0.iter().find(|(_, v)| !(*v >= 0.0) || !v.is_finite()) {
            return Err(SynthError::BadSchedule(format!(
                "amplitude {v} at t={t} is not a nonnegative number"
            )));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> f64 {
        let knots = &self.0;
        let Some(first) = knots.first() else {
            return 0.0;
        };
        if t <= first.0 {
            return first.1;
        }
        for w in knots.windows(2) {
            let (t0, v0) = w[0];
            let (t1, v1) = w[1];
            if t <= t1 {
                if t1 == t0 {
                    return v1;
                }
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        knots[knots.len() - 1].1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineComponent {
    pub frequency_hz: f64,
    pub amplitude: AmplitudeSchedule,
}

/// Gaze direction held from `from_s` until the next segment starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSegment {
    pub from_s: f64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    #[serde(default)]
    pub components: Vec<SineComponent>,
    #[serde(default)]
    pub noise_amplitude_uv: f64,
    #[serde(default)]
    pub gaze_script: Vec<GazeSegment>,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        for c in &self.components {
            c.amplitude.validate()?;
        }
        if !(self.noise_amplitude_uv >= 0.0) {
            return Err(SynthError::BadSchedule(format!(
                "noise amplitude {} is negative",
                self.noise_amplitude_uv
            )));
        }
        for w in self.gaze_script.windows(2) {
            if w[1].from_s < w[0].from_s {
                return Err(SynthError::BadGazeScript(format!(
                    "segment start {} precedes {}",
                    w[1].from_s, w[0].from_s
                )));
            }
        }
        Ok(())
    }

    pub fn gaze_at(&self, t: f64) -> (f64, f64) {
        self.gaze_script
            .iter()
            .take_while(|s| s.from_s <= t)
            .last()
            .or(self.gaze_script.first())
            .map(|s| (s.yaw_deg, s.pitch_deg))
            .unwrap_or((0.0, 0.0))
    }
}

/// Temporary scaling of components whose frequency lies in `[lo_hz, hi_hz]`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dip {
    start_s: f64,
    end_s: f64,
    factor: f64,
    lo_hz: f64,
    hi_hz: f64,
}

/// Unbounded frame source for one stream of a profile.
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    profile: SyntheticProfile,
    desc: StreamDescriptor,
    rng: ChaCha8Rng,
    index: u64,
    dips: Vec<Dip>,
}

impl SyntheticStream {
    pub fn new(profile: SyntheticProfile, desc: StreamDescriptor) -> Result<Self, SynthError> {
        desc.validate()?;
        profile.validate()?;
        if desc.stream_kind == StreamKind::Eeg
            && profile.components.is_empty()
            && profile.noise_amplitude_uv == 0.0
        {
            return Err(SynthError::EmptyProfile);
        }
        // Separate generators per stream kind so EEG and gaze stay independent.
        let stream_salt = match desc.stream_kind {
            StreamKind::Eeg => 0,
            StreamKind::Gaze => 0x9e37_79b9_7f4a_7c15,
        };
        let rng = ChaCha8Rng::seed_from_u64(profile.seed ^ stream_salt);
        Ok(SyntheticStream {
            profile,
            desc,
            rng,
            index: 0,
            dips: Vec::new(),
        })
    }

    pub fn descriptor(&self) -> &StreamDescriptor {
        &self.desc
    }

    /// Timestamp the next frame will carry.
    pub fn next_timestamp_us(&self) -> u64 {
        self.desc.sample_timestamp_us(self.index)
    }

    /// Scales components in `[lo_hz, hi_hz]` by `factor` for samples in
    /// `[start_s, end_s)`.
    pub fn add_dip(&mut self, start_s: f64, end_s: f64, factor: f64, lo_hz: f64, hi_hz: f64) {
        self.dips.push(Dip {
            start_s,
            end_s,
            factor,
            lo_hz,
            hi_hz,
        });
    }

    fn gain(&self, t: f64, freq: f64) -> f64 {
        self.dips
            .iter()
            .filter(|d| t >= d.start_s && t < d.end_s && freq >= d.lo_hz && freq <= d.hi_hz)
            .fold(1.0, |g, d| g * d.factor)
    }

    fn eeg_values(&mut self, t: f64) -> Vec<f32> {
        let clean: f64 = self
            .profile
            .components
            .iter()
            .map(|c| {
                c.amplitude.at(t)
                    * self.gain(t, c.frequency_hz)
                    * (2.0 * PI * c.frequency_hz * t).sin()
            })
            .sum();
        let a = self.profile.noise_amplitude_uv;
        (0..self.desc.channel_count)
            .map(|_| {
                let noise = if a > 0.0 {
                    self.rng.gen_range(-a..=a)
                } else {
                    0.0
                };
                (clean + noise) as f32
            })
            .collect()
    }
}

impl Iterator for SyntheticStream {
    type Item = RawFrame;

    fn next(&mut self) -> Option<RawFrame> {
        let timestamp_us = self.next_timestamp_us();
        let t = self.index as f64 / self.desc.sample_rate_hz;
        let values = match self.desc.stream_kind {
            StreamKind::Eeg => self.eeg_values(t),
            StreamKind::Gaze => {
                let (yaw, pitch) = self.profile.gaze_at(t);
                vec![yaw as f32, pitch as f32]
            }
        };
        self.index += 1;
        Some(RawFrame::new(self.desc.stream_kind, timestamp_us, values))
    }
}

/// Generates `floor(rate · duration)` frames of one stream.
pub fn synth_generate(
    profile: &SyntheticProfile,
    desc: &StreamDescriptor,
    duration_s: f64,
) -> Result<Vec<RawFrame>, SynthError> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(SynthError::BadDuration(duration_s));
    }
    let stream = SyntheticStream::new(profile.clone(), desc.clone())?;
    let n = (desc.sample_rate_hz * duration_s + 1e-9).floor() as usize;
    Ok(stream.take(n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_channel(rate: f64) -> StreamDescriptor {
        StreamDescriptor::new(StreamKind::Eeg, rate, vec!["Fz".into()]).unwrap()
    }

    fn sine(freq: f64, uv: f64) -> SyntheticProfile {
        SyntheticProfile {
            components: vec![SineComponent {
                frequency_hz: freq,
                amplitude: AmplitudeSchedule::constant(uv),
            }],
            noise_amplitude_uv: 0.0,
            gaze_script: vec![],
            seed: 1,
        }
    }

    #[test]
    fn single_sine_samples_definition() {
        let frames = synth_generate(&sine(10.0, 1.0), &one_channel(256.0), 1.0).unwrap();
        assert_eq!(frames.len(), 256);
        for (i, f) in frames.iter().enumerate() {
            let t = i as f64 / 256.0;
            let expected = (2.0 * PI * 10.0 * t).sin() as f32;
            assert_eq!(f.values, vec![expected]);
            assert_eq!(f.timestamp_us, (t * 1e6).round() as u64);
        }
    }

    #[test]
    fn zero_amplitude_gives_zeros() {
        let frames =
            synth_generate(&sine(10.0, 0.0), &StreamDescriptor::default_eeg(), 0.5).unwrap();
        assert!(frames.iter().all(|f| f.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn empty_profile_rejected_for_eeg_only() {
        let empty = SyntheticProfile {
            components: vec![],
            noise_amplitude_uv: 0.0,
            gaze_script: vec![],
            seed: 0,
        };
        assert_eq!(
            synth_generate(&empty, &one_channel(256.0), 1.0).unwrap_err(),
            SynthError::EmptyProfile
        );
        let gaze = synth_generate(&empty, &StreamDescriptor::default_gaze(), 1.0).unwrap();
        assert_eq!(gaze.len(), 90);
        assert_eq!(gaze[0].values, vec![0.0, 0.0]);
    }

    #[test]
    fn bad_duration() {
        assert!(matches!(
            synth_generate(&sine(10.0, 1.0), &one_channel(256.0), 0.0),
            Err(SynthError::BadDuration(_))
        ));
    }

    #[test]
    fn frame_count_and_timestamps_at_odd_rate() {
        let desc = StreamDescriptor::default_gaze();
        let frames = synth_generate(&sine(10.0, 1.0), &desc, 1.25).unwrap();
        assert_eq!(frames.len(), 112);
        assert_eq!(frames[1].timestamp_us, 11_111);
        assert_eq!(frames[2].timestamp_us, 22_222);
        assert!(frames
            .windows(2)
            .all(|w| w[0].timestamp_us < w[1].timestamp_us));
    }

    #[test]
    fn seeded_noise_is_deterministic_and_bounded() {
        let mut p = sine(10.0, 0.0);
        p.noise_amplitude_uv = 3.0;
        p.seed = 42;
        let desc = StreamDescriptor::default_eeg();
        let a = synth_generate(&p, &desc, 1.0).unwrap();
        let b = synth_generate(&p, &desc, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flat_map(|f| &f.values).all(|v| v.abs() <= 3.0));
        // channels draw independent noise
        assert_ne!(a[0].values[0], a[0].values[1]);
        p.seed = 43;
        assert_ne!(a, synth_generate(&p, &desc, 1.0).unwrap());
    }

    #[test]
    fn schedule_interpolates_and_holds() {
        let s = AmplitudeSchedule(vec![(1.0, 2.0), (3.0, 6.0), (3.0, 1.0)]);
        assert_eq!(s.at(0.0), 2.0);
        assert_eq!(s.at(2.0), 4.0);
        assert_eq!(s.at(3.0), 6.0);
        assert_eq!(s.at(10.0), 1.0);
        assert!(AmplitudeSchedule(vec![(0.0, -1.0)]).validate().is_err());
        assert!(AmplitudeSchedule(vec![(1.0, 1.0), (0.0, 1.0)])
            .validate()
            .is_err());
    }

    #[test]
    fn gaze_script_is_piecewise_constant() {
        let p = SyntheticProfile {
            components: vec![],
            noise_amplitude_uv: 0.0,
            gaze_script: vec![
                GazeSegment {
                    from_s: 0.0,
                    yaw_deg: 1.0,
                    pitch_deg: 2.0,
                },
                GazeSegment {
                    from_s: 0.5,
                    yaw_deg: -10.0,
                    pitch_deg: 0.0,
                },
            ],
            seed: 0,
        };
        assert_eq!(p.gaze_at(0.49), (1.0, 2.0));
        assert_eq!(p.gaze_at(0.5), (-10.0, 0.0));
        assert_eq!(p.gaze_at(100.0), (-10.0, 0.0));
    }

    #[test]
    fn dip_scales_only_matching_band() {
        let mut p = sine(10.0, 1.0);
        p.components.push(SineComponent {
            frequency_hz: 20.0,
            amplitude: AmplitudeSchedule::constant(1.0),
        });
        let desc = one_channel(256.0);
        let mut dipped = SyntheticStream::new(p.clone(), desc.clone()).unwrap();
        dipped.add_dip(0.0, 10.0, 0.0, 8.0, 13.0);
        let only_beta = SyntheticStream::new(sine(20.0, 1.0), desc).unwrap();
        for (a, b) in dipped.zip(only_beta).take(256) {
            assert_eq!(a.values, b.values);
        }
    }
}
