//! Velocity-threshold fixation/saccade classification and the gate that
//! freezes concentration-score updates while gaze is shifting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GazeError {
    #[error("gaze timestamp {curr_us} does not follow {prev_us}")]
    TimestampRegression { prev_us: u64, curr_us: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub timestamp_us: u64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

impl GazeSample {
    pub fn new(timestamp_us: u64, yaw_deg: f64, pitch_deg: f64) -> Self {
        GazeSample {
            timestamp_us,
            yaw_deg,
            pitch_deg,
        }
    }

    fn unit_vector(&self) -> [f64; 3] {
        let (yaw, pitch) = (self.yaw_deg.to_radians(), self.pitch_deg.to_radians());
        [
            pitch.cos() * yaw.cos(),
            pitch.cos() * yaw.sin(),
            pitch.sin(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GazeClass {
    Fixation,
    Saccade,
}

/// Great-circle angle between two gaze directions, in degrees.
pub fn central_angle_deg(a: &GazeSample, b: &GazeSample) -> f64 {
    let (u, v) = (a.unit_vector(), b.unit_vector());
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    sin.atan2(dot).to_degrees()
}

/// Angular speed in deg/s between consecutive samples.
pub fn angular_velocity(prev: &GazeSample, curr: &GazeSample) -> Result<f64, GazeError> {
    if curr.timestamp_us <= prev.timestamp_us {
        return Err(GazeError::TimestampRegression {
            prev_us: prev.timestamp_us,
            curr_us: curr.timestamp_us,
        });
    }
    let dt_s = (curr.timestamp_us - prev.timestamp_us) as f64 / 1e6;
    Ok(central_angle_deg(prev, curr) / dt_s)
}

/// Saccade iff velocity strictly exceeds the threshold.
pub fn classify(velocity_dps: f64, threshold_dps: f64) -> GazeClass {
    if velocity_dps > threshold_dps {
        GazeClass::Saccade
    } else {
        GazeClass::Fixation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GazeConfig {
    pub threshold_dps: f64,
    /// Gate decay time constant during saccades.
    pub tau_drop_s: f64,
    /// Gate recovery time constant during fixations.
    pub tau_rise_s: f64,
    /// 3-sample median filter on yaw/pitch before differentiation.
    pub median_filter: bool,
}

impl Default for GazeConfig {
    fn default() -> Self {
        GazeConfig {
            threshold_dps: 30.0,
            tau_drop_s: 0.05,
            tau_rise_s: 0.5,
            median_filter: false,
        }
    }
}

impl GazeConfig {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        for (name, v) in [
            ("gaze.threshold_dps", self.threshold_dps),
            ("gaze.tau_drop_s", self.tau_drop_s),
            ("gaze.tau_rise_s", self.tau_rise_s),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err((name, "must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeState {
    pub angular_velocity_dps: f64,
    pub classification: GazeClass,
    pub gate: f64,
}

impl Default for GazeState {
    fn default() -> Self {
        GazeState {
            angular_velocity_dps: 0.0,
            classification: GazeClass::Fixation,
            gate: 1.0,
        }
    }
}

impl GazeState {
    /// Gate as seen by the score estimator: zero for the whole saccade, the
    /// recovering gate during fixation.
    pub fn effective_gate(&self) -> f64 {
        match self.classification {
            GazeClass::Saccade => 0.0,
            GazeClass::Fixation => self.gate,
        }
    }
}

/// Exponential decay toward 0 during saccades (`tau_drop_s`), recovery
/// toward 1 during fixations (`tau_rise_s`).
pub fn update_gate(
    state: GazeState,
    classification: GazeClass,
    dt_s: f64,
    config: &GazeConfig,
) -> GazeState {
    let gate = match classification {
        GazeClass::Saccade => state.gate * (-dt_s / config.tau_drop_s).exp(),
        GazeClass::Fixation => 1.0 - (1.0 - state.gate) * (-dt_s / config.tau_rise_s).exp(),
    };
    GazeState {
        classification,
        gate: gate.clamp(0.0, 1.0),
        ..state
    }
}

fn median3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.min(b).max(c))
}

/// Per-session gaze state machine fed one sample at a time.
#[derive(Debug, Clone)]
pub struct GazeTracker {
    config: GazeConfig,
    raw: Vec<GazeSample>,
    prev: Option<GazeSample>,
    state: GazeState,
    /// Lowest effective gate since the last [`take_gate`](Self::take_gate).
    gate_floor: Option<f64>,
}

impl GazeTracker {
    pub fn new(config: GazeConfig) -> Self {
        GazeTracker {
            config,
            raw: Vec::with_capacity(3),
            prev: None,
            state: GazeState::default(),
            gate_floor: None,
        }
    }

    pub fn state(&self) -> GazeState {
        self.state
    }

    fn filtered(&mut self, sample: GazeSample) -> GazeSample {
        if !self.config.median_filter {
            return sample;
        }
        if self.raw.len() == 3 {
            self.raw.remove(0);
        }
        self.raw.push(sample);
        if self.raw.len() < 3 {
            return sample;
        }
        let [a, b, c] = [self.raw[0], self.raw[1], self.raw[2]];
        GazeSample {
            timestamp_us: sample.timestamp_us,
            yaw_deg: median3(a.yaw_deg, b.yaw_deg, c.yaw_deg),
            pitch_deg: median3(a.pitch_deg, b.pitch_deg, c.pitch_deg),
        }
    }

    pub fn push(&mut self, sample: GazeSample) -> Result<GazeState, GazeError> {
        if let Some(prev) = self.prev {
            if sample.timestamp_us <= prev.timestamp_us {
                return Err(GazeError::TimestampRegression {
                    prev_us: prev.timestamp_us,
                    curr_us: sample.timestamp_us,
                });
            }
        }
        let sample = self.filtered(sample);
        if let Some(prev) = self.prev {
            let velocity = angular_velocity(&prev, &sample)?;
            let dt_s = (sample.timestamp_us - prev.timestamp_us) as f64 / 1e6;
            let class = classify(velocity, self.config.threshold_dps);
            self.state = update_gate(self.state, class, dt_s, &self.config);
            self.state.angular_velocity_dps = velocity;
        }
        self.prev = Some(sample);
        let eff = self.state.effective_gate();
        self.gate_floor = Some(self.gate_floor.map_or(eff, |g| g.min(eff)));
        Ok(self.state)
    }

    /// Lowest effective gate seen since the previous call, so a saccade that
    /// starts and ends between two score updates still freezes the score.
    /// Without new samples the current effective gate is returned.
    pub fn take_gate(&mut self) -> f64 {
        self.gate_floor
            .take()
            .unwrap_or_else(|| self.state.effective_gate())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_zero_velocity() {
        let a = GazeSample::new(0, 12.0, -3.0);
        let b = GazeSample::new(10_000, 12.0, -3.0);
        assert_eq!(angular_velocity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn yaw_step_on_equator() {
        let a = GazeSample::new(0, 0.0, 0.0);
        let b = GazeSample::new(100_000, 9.0, 0.0);
        assert!((angular_velocity(&a, &b).unwrap() - 90.0).abs() < 1e-9);
    }

    #[test]
    fn regression_rejected() {
        let a = GazeSample::new(5, 0.0, 0.0);
        assert!(angular_velocity(&a, &a).is_err());
    }

    #[test]
    fn classify_boundary_is_fixation() {
        assert_eq!(classify(0.0, 30.0), GazeClass::Fixation);
        assert_eq!(classify(30.0, 30.0), GazeClass::Fixation);
        assert_eq!(classify(900.0, 30.0), GazeClass::Saccade);
    }

    #[test]
    fn gate_limits() {
        let cfg = GazeConfig::default();
        let mut s = GazeState::default();
        for _ in 0..250 {
            s = update_gate(s, GazeClass::Saccade, 0.001, &cfg);
        }
        assert!(s.gate <= 0.01, "{}", s.gate);

        let mut s = GazeState {
            gate: 0.0,
            ..GazeState::default()
        };
        for _ in 0..2500 {
            s = update_gate(s, GazeClass::Fixation, 0.001, &cfg);
        }
        assert!(s.gate >= 0.99);

        let s = update_gate(GazeState::default(), GazeClass::Fixation, 0.3, &cfg);
        assert_eq!(s.gate, 1.0);
    }

    #[test]
    fn median_filter_removes_single_spike() {
        let mut t = GazeTracker::new(GazeConfig {
            median_filter: true,
            ..GazeConfig::default()
        });
        let yaws = [0.0, 0.0, 40.0, 0.0, 0.0];
        let states: Vec<_> = yaws
            .iter()
            .enumerate()
            .map(|(i, &y)| t.push(GazeSample::new(i as u64 * 11_111, y, 0.0)).unwrap())
            .collect();
        assert!(states
            .iter()
            .all(|s| s.classification == GazeClass::Fixation));

        let mut raw = GazeTracker::new(GazeConfig::default());
        let saw_saccade = yaws.iter().enumerate().any(|(i, &y)| {
            raw.push(GazeSample::new(i as u64 * 11_111, y, 0.0))
                .unwrap()
                .classification
                == GazeClass::Saccade
        });
        assert!(saw_saccade);
    }

    #[test]
    fn take_gate_reports_floor_between_updates() {
        let mut t = GazeTracker::new(GazeConfig::default());
        t.push(GazeSample::new(0, 0.0, 0.0)).unwrap();
        t.push(GazeSample::new(10_000, 10.0, 0.0)).unwrap();
        t.push(GazeSample::new(20_000, 10.0, 0.0)).unwrap();
        assert_eq!(t.take_gate(), 0.0);
        let g = t.take_gate();
        assert!(g > 0.0 && g < 1.0);
    }
}
