//! Messages exchanged with dashboard clients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::ScoreMode;
use crate::feedback::FeedbackCommand;
use crate::game::{DistractionKind, PhaseCommand};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PullTelemetry {
    pub displacement_m: f64,
    pub applied_force_n: f64,
    pub velocity_mps: f64,
}

/// Snapshot published at the score cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryRecord {
    pub t_us: u64,
    pub phase: String,
    pub score: f64,
    pub relative_alpha: f64,
    pub gate: f64,
    pub feedback: FeedbackCommand,
    pub pull: PullTelemetry,
    pub events: Vec<String>,
}

impl TelemetryRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("telemetry serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorCommand {
    StartCalibration,
    FinishPhase,
    StartPull,
    Abort,
    InjectDistraction {
        #[serde(default)]
        distraction: DistractionKind,
    },
    SetForce {
        newtons: f64,
    },
    SetMode {
        mode: ScoreMode,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("bad command: {0}")]
pub struct CommandParseError(pub String);

impl OperatorCommand {
    pub fn parse(text: &str) -> Result<Self, CommandParseError> {
        let cmd: OperatorCommand =
            serde_json::from_str(text).map_err(|e| CommandParseError(e.to_string()))?;
        if let OperatorCommand::SetForce { newtons } = cmd {
            if !newtons.is_finite() || newtons < 0.0 {
                return Err(CommandParseError(format!(
                    "force {newtons} must be a nonnegative number"
                )));
            }
        }
        Ok(cmd)
    }

    pub fn phase_command(&self) -> Option<PhaseCommand> {
        match self {
            OperatorCommand::StartCalibration => Some(PhaseCommand::StartCalibration),
            OperatorCommand::FinishPhase => Some(PhaseCommand::FinishPhase),
            OperatorCommand::StartPull => Some(PhaseCommand::StartPull),
            OperatorCommand::Abort => Some(PhaseCommand::Abort),
            _ => None,
        }
    }
}
