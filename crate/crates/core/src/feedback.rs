//! Score → multimodal stimulus mapping.
//!
//! Every stimulus shrinks as concentration rises: the visible field narrows,
//! the surroundings slow down, ambient audio gets quieter and slower, the
//! grip vibration contracts toward its centre and weakens, and the motor's
//! traction force drops so the sword becomes easier to pull.

use serde::{Deserialize, Serialize};

/// Values of one stimulus field at score 0 (`rest`) and score 1 (`focus`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub rest: f64,
    pub focus: f64,
}

impl Endpoints {
    pub const fn new(rest: f64, focus: f64) -> Self {
        Endpoints { rest, focus }
    }

    /// `rest − shaped · (rest − focus)`, written so both endpoints are exact.
    fn at(&self, shaped: f64) -> f64 {
        let v = self.focus * shaped + self.rest * (1.0 - shaped);
        v.clamp(self.focus.min(self.rest), self.focus.max(self.rest))
    }

    fn ordered(&self) -> bool {
        self.rest.is_finite() && self.focus.is_finite() && self.rest >= self.focus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub fov_scale: Endpoints,
    pub time_scale: Endpoints,
    pub audio_gain: Endpoints,
    pub audio_rate: Endpoints,
    pub vibe_amplitude: Endpoints,
    pub traction_n: Endpoints,
    /// Grip vibrators, odd so the array has a centre.
    pub vibrator_count: usize,
    /// Perceptual shaping exponent applied to the score.
    pub gamma: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig {
            fov_scale: Endpoints::new(1.0, 0.4),
            time_scale: Endpoints::new(1.0, 0.25),
            audio_gain: Endpoints::new(1.0, 0.1),
            audio_rate: Endpoints::new(1.0, 0.5),
            vibe_amplitude: Endpoints::new(1.0, 0.1),
            traction_n: Endpoints::new(40.0, 5.0),
            vibrator_count: 5,
            gamma: 1.0,
        }
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let unit = [
            ("feedback.fov_scale", self.fov_scale),
            ("feedback.time_scale", self.time_scale),
            ("feedback.audio_gain", self.audio_gain),
            ("feedback.audio_rate", self.audio_rate),
            ("feedback.vibe_amplitude", self.vibe_amplitude),
        ];
        for (name, e) in unit {
            if !e.ordered() {
                return Err((name, "score-0 endpoint must be >= score-1 endpoint".into()));
            }
            if e.focus < 0.0 || e.rest > 1.0 {
                return Err((name, "endpoints must lie in [0, 1]".into()));
            }
        }
        if !self.traction_n.ordered() || self.traction_n.focus < 0.0 {
            return Err((
                "feedback.traction_n",
                "traction must be nonnegative and largest at score 0".into(),
            ));
        }
        if self.vibrator_count == 0 || self.vibrator_count.is_multiple_of(2) {
            return Err((
                "feedback.vibrator_count",
                "must be a positive odd number".into(),
            ));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(("feedback.gamma", "must be positive".into()));
        }
        Ok(())
    }

    fn shaped(&self, score: f64) -> f64 {
        score.clamp(0.0, 1.0).powf(self.gamma)
    }
}

/// Stimulus parameters for one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackCommand {
    pub fov_scale: f64,
    pub time_scale: f64,
    pub audio_gain: f64,
    pub audio_rate: f64,
    pub vibe_amplitudes: Vec<f64>,
    pub traction_n: f64,
    pub wind_on: bool,
}

impl FeedbackCommand {
    pub fn active_vibrators(&self) -> usize {
        self.vibe_amplitudes.iter().filter(|&&a| a > 0.0).count()
    }
}

pub fn map_visual(score: f64, config: &FeedbackConfig) -> (f64, f64) {
    let s = config.shaped(score);
    (config.fov_scale.at(s), config.time_scale.at(s))
}

pub fn map_audio(score: f64, config: &FeedbackConfig) -> (f64, f64) {
    let s = config.shaped(score);
    (config.audio_gain.at(s), config.audio_rate.at(s))
}

/// Active half-width `ceil((1 − s)·(N − 1)/2)` around the centre vibrator.
pub fn active_half_width(shaped: f64, vibrator_count: usize) -> usize {
    let half = (vibrator_count.saturating_sub(1) / 2) as f64;
    // Tolerate rounding noise just above an integer.
    ((1.0 - shaped) * half - 1e-12).ceil().clamp(0.0, half) as usize
}

pub fn map_haptic(score: f64, config: &FeedbackConfig) -> (Vec<f64>, f64) {
    let s = config.shaped(score);
    let n = config.vibrator_count;
    let centre = n / 2;
    let width = active_half_width(s, n);
    let amplitude = config.vibe_amplitude.at(s);
    let vibes = (0..n)
        .map(|i| {
            if i.abs_diff(centre) <= width {
                amplitude
            } else {
                0.0
            }
        })
        .collect();
    (vibes, config.traction_n.at(s))
}

pub fn compose(score: f64, wind_on: bool, config: &FeedbackConfig) -> FeedbackCommand {
    let (fov_scale, time_scale) = map_visual(score, config);
    let (audio_gain, audio_rate) = map_audio(score, config);
    let (vibe_amplitudes, traction_n) = map_haptic(score, config);
    FeedbackCommand {
        fov_scale,
        time_scale,
        audio_gain,
        audio_rate,
        vibe_amplitudes,
        traction_n,
        wind_on,
    }
}
