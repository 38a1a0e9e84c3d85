//! Per-user calibration and the gated concentration score.
//!
//! Calibration records the relative-alpha metric in a relaxed baseline state
//! and in an instructed concentration state. The two means anchor a linear
//! map onto `[0, 1]`. The score then follows the normalized metric either by
//! exponential smoothing (`linear`) or as a trailing average (`time_avg`);
//! in both modes the gaze gate scales how far a single update may move it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationPhase {
    Baseline,
    Concentration,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("{phase:?} phase has {got} metric samples, need {need}")]
    InsufficientSamples {
        phase: CalibrationPhase,
        got: usize,
        need: usize,
    },
    #[error("concentration mean {conc_mean:.4} does not exceed baseline mean {base_mean:.4} by margin {margin}")]
    InvalidCalibration {
        base_mean: f64,
        conc_mean: f64,
        margin: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Linear,
    TimeAvg,
}

impl std::str::FromStr for ScoreMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(ScoreMode::Linear),
            "time_avg" => Ok(ScoreMode::TimeAvg),
            other => Err(format!("unknown score mode {other:?} (linear|time_avg)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub mode: ScoreMode,
    pub avg_window_s: f64,
    pub ema_tau_s: f64,
    /// Minimum conc_mean − base_mean, in relative-alpha units.
    pub margin: f64,
    pub min_samples: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            mode: ScoreMode::Linear,
            avg_window_s: 3.0,
            ema_tau_s: 1.0,
            margin: 0.01,
            min_samples: 20,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !(self.avg_window_s > 0.0) {
            return Err(("estimator.avg_window_s", "must be positive".into()));
        }
        if !(self.ema_tau_s > 0.0) {
            return Err(("estimator.ema_tau_s", "must be positive".into()));
        }
        if !(self.margin >= 0.0) {
            return Err(("estimator.margin", "must be nonnegative".into()));
        }
        if self.min_samples == 0 {
            return Err(("estimator.min_samples", "must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    pub base_mean: f64,
    pub base_std: f64,
    pub conc_mean: f64,
    pub conc_std: f64,
    pub sample_counts: (usize, usize),
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn calibrate(
    baseline_metrics: &[f64],
    concentration_metrics: &[f64],
    config: &EstimatorConfig,
) -> Result<CalibrationStats, EstimatorError> {
    let need = config.min_samples.max(1);
    for (phase, xs) in [
        (CalibrationPhase::Baseline, baseline_metrics),
        (CalibrationPhase::Concentration, concentration_metrics),
    ] {
        if xs.len() < need {
            return Err(EstimatorError::InsufficientSamples {
                phase,
                got: xs.len(),
                need,
            });
        }
    }
    let (base_mean, base_std) = mean_std(baseline_metrics);
    let (conc_mean, conc_std) = mean_std(concentration_metrics);
    if !(conc_mean > base_mean + config.margin) {
        return Err(EstimatorError::InvalidCalibration {
            base_mean,
            conc_mean,
            margin: config.margin,
        });
    }
    Ok(CalibrationStats {
        base_mean,
        base_std,
        conc_mean,
        conc_std,
        sample_counts: (baseline_metrics.len(), concentration_metrics.len()),
    })
}

/// `clamp((metric − base_mean) / (conc_mean − base_mean), 0, 1)`.
pub fn normalize(metric: f64, stats: &CalibrationStats) -> f64 {
    let span = stats.conc_mean - stats.base_mean;
    if !(span > 0.0) {
        return 0.0;
    }
    ((metric - stats.base_mean) / span).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationScore {
    pub value: f64,
    pub timestamp_us: u64,
    pub mode: ScoreMode,
}

impl ConcentrationScore {
    pub fn new(value: f64, timestamp_us: u64, mode: ScoreMode) -> Self {
        ConcentrationScore {
            value: value.clamp(0.0, 1.0),
            timestamp_us,
            mode,
        }
    }
}

/// One exponential-smoothing step with step weight `gate · (1 − e^(−dt/τ))`.
/// A zero gate returns `prev` unchanged.
pub fn smooth_step(prev: f64, raw: f64, gate: f64, dt_s: f64, tau_s: f64) -> f64 {
    let gate = gate.clamp(0.0, 1.0);
    if gate == 0.0 {
        return prev;
    }
    let alpha = gate * (1.0 - (-dt_s / tau_s).exp());
    (prev + alpha * (raw - prev)).clamp(0.0, 1.0)
}

/// Stateful score follower; one per session.
#[derive(Debug, Clone)]
pub struct Estimator {
    config: EstimatorConfig,
    score: ConcentrationScore,
    /// `(timestamp_us, raw, weight)` admitted into the trailing average.
    history: VecDeque<(u64, f64, f64)>,
}

impl Estimator {
    pub fn new(config: EstimatorConfig) -> Self {
        let mode = config.mode;
        Estimator {
            config,
            score: ConcentrationScore::new(0.0, 0, mode),
            history: VecDeque::new(),
        }
    }

    pub fn score(&self) -> ConcentrationScore {
        self.score
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    /// Switches output mode, keeping the current value as the starting point.
    pub fn set_mode(&mut self, mode: ScoreMode) {
        if mode != self.config.mode {
            self.config.mode = mode;
            self.score.mode = mode;
            self.history.clear();
        }
    }

    pub fn update(&mut self, raw: f64, gate: f64, dt_s: f64) -> ConcentrationScore {
        let t = self.score.timestamp_us + (dt_s * 1e6).round() as u64;
        self.update_at(t, raw, gate, dt_s)
    }

    /// As [`update`](Self::update), stamping the result with session time `t`.
    pub fn update_at(&mut self, t: u64, raw: f64, gate: f64, dt_s: f64) -> ConcentrationScore {
        let raw = raw.clamp(0.0, 1.0);
        let gate = gate.clamp(0.0, 1.0);
        let value = if gate == 0.0 {
            self.score.value
        } else {
            match self.config.mode {
                ScoreMode::Linear => {
                    smooth_step(self.score.value, raw, gate, dt_s, self.config.ema_tau_s)
                }
                ScoreMode::TimeAvg => self.trailing_average(t, raw, gate),
            }
        };
        self.score = ConcentrationScore::new(value, t, self.config.mode);
        self.score
    }

    fn trailing_average(&mut self, t_us: u64, raw: f64, weight: f64) -> f64 {
        self.history.push_back((t_us, raw, weight));
        let span_us = (self.config.avg_window_s * 1e6).round() as u64;
        while let Some(&(t0, _, _)) = self.history.front() {
            if t_us.saturating_sub(t0) >= span_us {
                self.history.pop_front();
            } else {
                break;
            }
        }
        let (sum, total) = self
            .history
            .iter()
            .fold((0.0, 0.0), |(s, w), &(_, r, g)| (s + g * r, w + g));
        if total > 0.0 {
            sum / total
        } else {
            self.score.value
        }
    }
}
