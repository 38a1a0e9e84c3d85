//! Engine configuration: one JSON document with a section per subsystem.
//! Missing keys take their defaults; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::DspConfig;
use crate::estimator::EstimatorConfig;
use crate::feedback::FeedbackConfig;
use crate::game::{GameError, SessionConfig};
use crate::gaze::GazeConfig;
use crate::ingest::{StreamDescriptor, StreamKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParseError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config field {field}: {reason}")]
    ConfigValidationError { field: String, reason: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::ConfigValidationError {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub eeg_rate_hz: f64,
    pub eeg_labels: Vec<String>,
    pub gaze_rate_hz: f64,
    /// Bound of each per-stream frame queue.
    pub queue_capacity: usize,
    pub replay_speed: f64,
    /// Address the binary sensor protocol listens on.
    pub sensor_listen: String,
}

impl Default for IngestConfig {
    fn default() -> Self {
        let eeg = StreamDescriptor::default_eeg();
        IngestConfig {
            eeg_rate_hz: eeg.sample_rate_hz,
            eeg_labels: eeg.channel_labels,
            gaze_rate_hz: StreamDescriptor::default_gaze().sample_rate_hz,
            queue_capacity: 4096,
            replay_speed: 1.0,
            sensor_listen: "127.0.0.1:7400".to_string(),
        }
    }
}

impl IngestConfig {
    pub fn eeg_descriptor(&self) -> StreamDescriptor {
        StreamDescriptor {
            stream_kind: StreamKind::Eeg,
            sample_rate_hz: self.eeg_rate_hz,
            channel_count: self.eeg_labels.len(),
            channel_labels: self.eeg_labels.clone(),
        }
    }

    pub fn gaze_descriptor(&self) -> StreamDescriptor {
        StreamDescriptor {
            sample_rate_hz: self.gaze_rate_hz,
            ..StreamDescriptor::default_gaze()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// Per-client telemetry backlog before the oldest records are dropped.
    pub client_queue: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".to_string(),
            client_queue: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub ingest: IngestConfig,
    pub dsp: DspConfig,
    pub gaze: GazeConfig,
    pub estimator: EstimatorConfig,
    pub feedback: FeedbackConfig,
    pub game: SessionConfig,
    pub service: ServiceConfig,
}

impl EngineConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let config: EngineConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::ConfigParseError {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ingest
            .eeg_descriptor()
            .validate()
            .map_err(|e| ConfigError::invalid("ingest.eeg", e.to_string()))?;
        self.ingest
            .gaze_descriptor()
            .validate()
            .map_err(|e| ConfigError::invalid("ingest.gaze_rate_hz", e.to_string()))?;
        if self.ingest.queue_capacity == 0 {
            return Err(ConfigError::invalid(
                "ingest.queue_capacity",
                "must be positive",
            ));
        }
        if !(self.ingest.replay_speed >= 0.0) {
            return Err(ConfigError::invalid(
                "ingest.replay_speed",
                "must be nonnegative",
            ));
        }
        self.dsp
            .validate()
            .map_err(|(f, r)| ConfigError::invalid(f, r))?;
        if self.dsp.segment_len > self.dsp.window_capacity(self.ingest.eeg_rate_hz) {
            return Err(ConfigError::invalid(
                "dsp.segment_len",
                "longer than the analysis window",
            ));
        }
        if let Some(bad) = self
            .dsp
            .channels
            .iter()
            .flatten()
            .find(|&&c| c >= self.ingest.eeg_labels.len())
        {
            return Err(ConfigError::invalid(
                "dsp.channels",
                format!("channel {bad} does not exist"),
            ));
        }
        self.gaze
            .validate()
            .map_err(|(f, r)| ConfigError::invalid(f, r))?;
        self.estimator
            .validate()
            .map_err(|(f, r)| ConfigError::invalid(f, r))?;
        self.feedback
            .validate()
            .map_err(|(f, r)| ConfigError::invalid(f, r))?;
        self.game.validate().map_err(|e| match e {
            GameError::BadConfig { field, reason } => {
                ConfigError::invalid(format!("game.{field}"), reason)
            }
            other => ConfigError::invalid("game", other.to_string()),
        })?;
        if self.service.client_queue == 0 {
            return Err(ConfigError::invalid(
                "service.client_queue",
                "must be positive",
            ));
        }
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<EngineConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    EngineConfig::from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_defaults() {
        assert_eq!(
            EngineConfig::from_json_str("{}").unwrap(),
            EngineConfig::default()
        );
    }

    #[test]
    fn inverted_force_band_rejected() {
        let err = EngineConfig::from_json_str(r#"{"game":{"force_lo_n":60,"force_hi_n":10}}"#)
            .unwrap_err();
        match err {
            ConfigError::ConfigValidationError { field, .. } => {
                assert_eq!(field, "game.force band")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn defaults_round_trip() {
        let text = EngineConfig::default().to_json_pretty();
        assert_eq!(
            EngineConfig::from_json_str(&text).unwrap(),
            EngineConfig::default()
        );
    }

    #[test]
    fn parse_error_has_position() {
        let err =
            EngineConfig::from_json_str("{\n  \"dsp\": {\n    \"window_s\": ,\n").unwrap_err();
        assert!(
            matches!(err, ConfigError::ConfigParseError { line: 3, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            EngineConfig::from_json_str(r#"{"gaze":{"threshold":30}}"#),
            Err(ConfigError::ConfigParseError { .. })
        ));
    }

    #[test]
    fn partial_section_keeps_other_defaults() {
        let c = EngineConfig::from_json_str(
            r#"{"estimator":{"mode":"time_avg"},"feedback":{"gamma":2}}"#,
        )
        .unwrap();
        assert_eq!(c.estimator.avg_window_s, 3.0);
        assert_eq!(c.feedback.gamma, 2.0);
        assert_eq!(c.feedback.vibrator_count, 5);
    }

    #[test]
    fn validation_reaches_every_section() {
        for (json, field) in [
            (r#"{"dsp":{"segment_len":1000}}"#, "dsp.segment_len"),
            (r#"{"dsp":{"channels":[9]}}"#, "dsp.channels"),
            (r#"{"gaze":{"tau_drop_s":0}}"#, "gaze.tau_drop_s"),
            (r#"{"estimator":{"ema_tau_s":-1}}"#, "estimator.ema_tau_s"),
            (
                r#"{"feedback":{"vibrator_count":4}}"#,
                "feedback.vibrator_count",
            ),
            (r#"{"game":{"travel_m":0}}"#, "game.travel"),
            (r#"{"ingest":{"eeg_rate_hz":0}}"#, "ingest.eeg"),
        ] {
            match EngineConfig::from_json_str(json) {
                Err(ConfigError::ConfigValidationError { field: f, .. }) => {
                    assert_eq!(f, field, "{json}")
                }
                other => panic!("{json}: {other:?}"),
            }
        }
    }
}
