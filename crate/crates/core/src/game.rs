//! The sword-pull session: calibration phases, the pull with its force band
//! and speed governor, scripted distractions, the time limit, and the wind
//! cue on success.
//!
//! Legal phase sequence: `Idle → CalibBaseline → CalibConcentration → Pull →
//! (Success | Failure)`. Abort sends any non-terminal phase to
//! `Failure(aborted)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{
    calibrate, CalibrationStats, ConcentrationScore, EstimatorConfig, EstimatorError,
};
use crate::feedback::{compose, FeedbackCommand, FeedbackConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistractionKind {
    #[default]
    MonsterScream,
    Other,
}

impl DistractionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DistractionKind::MonsterScream => "monster_scream",
            DistractionKind::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledDistraction {
    /// Seconds after the pull starts.
    pub at_s: f64,
    pub kind: DistractionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub baseline_s: f64,
    pub conc_calib_s: f64,
    pub pull_limit_s: f64,
    pub travel_m: f64,
    pub force_lo_n: f64,
    pub force_hi_n: f64,
    /// Extraction speed at score 1.
    pub v_max_mps: f64,
    /// Governor cap.
    pub v_cap_mps: f64,
    pub penalty_hold_s: f64,
    pub distractions: Vec<ScheduledDistraction>,
    /// Dynamics tick rate.
    pub dynamics_hz: f64,
    /// Leave calibration phases automatically once their duration elapses.
    pub auto_advance: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            baseline_s: 30.0,
            conc_calib_s: 30.0,
            pull_limit_s: 60.0,
            travel_m: 0.30,
            force_lo_n: 10.0,
            force_hi_n: 60.0,
            v_max_mps: 0.05,
            v_cap_mps: 0.06,
            penalty_hold_s: 0.5,
            distractions: Vec::new(),
            dynamics_hz: 100.0,
            auto_advance: true,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |field: &'static str, reason: &str| {
            Err(GameError::BadConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.force_lo_n > 0.0 && self.force_lo_n < self.force_hi_n) {
            return bad("force band", "need 0 < force_lo_n < force_hi_n");
        }
        if !(self.travel_m > 0.0) {
            return bad("travel", "travel_m must be positive");
        }
        if !(self.v_max_mps > 0.0 && self.v_max_mps <= self.v_cap_mps) {
            return bad("velocity", "need 0 < v_max_mps <= v_cap_mps");
        }
        if !(self.pull_limit_s > 0.0) {
            return bad("pull_limit_s", "must be positive");
        }
        if !(self.baseline_s > 0.0) || !(self.conc_calib_s > 0.0) {
            return bad("calibration durations", "must be positive");
        }
        if !(self.penalty_hold_s >= 0.0) {
            return bad("penalty_hold_s", "must be nonnegative");
        }
        if !(self.dynamics_hz > 0.0) {
            return bad("dynamics_hz", "must be positive");
        }
        if self.distractions.iter().any(|d| !(d.at_s >= 0.0)) {
            return bad("distractions", "times must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Timeout,
    Aborted,
    CalibrationInvalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    Idle,
    CalibBaseline,
    CalibConcentration,
    Pull,
    Success,
    Failure(FailureReason),
}

impl SessionPhase {
    pub fn is_terminal(self) -> bool {
        matches!(self, SessionPhase::Success | SessionPhase::Failure(_))
    }
}

impl fmt::Display for SessionPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionPhase::Idle => f.write_str("idle"),
            SessionPhase::CalibBaseline => f.write_str("calib_baseline"),
            SessionPhase::CalibConcentration => f.write_str("calib_concentration"),
            SessionPhase::Pull => f.write_str("pull"),
            SessionPhase::Success => f.write_str("success"),
            SessionPhase::Failure(FailureReason::Timeout) => f.write_str("failure:timeout"),
            SessionPhase::Failure(FailureReason::Aborted) => f.write_str("failure:aborted"),
            SessionPhase::Failure(FailureReason::CalibrationInvalid) => {
                f.write_str("failure:calibration_invalid")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseCommand {
    StartCalibration,
    FinishPhase,
    StartPull,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("bad session config ({field}): {reason}")]
    BadConfig { field: &'static str, reason: String },
    #[error("{command:?} is not allowed in phase {from}")]
    IllegalTransition {
        from: SessionPhase,
        command: PhaseCommand,
    },
    #[error("pull step requested in phase {0}")]
    WrongPhase(SessionPhase),
    #[error(transparent)]
    Calibration(#[from] EstimatorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullState {
    pub displacement_m: f64,
    pub applied_force_n: f64,
    pub last_velocity_mps: f64,
    /// Session clock time until which displacement is frozen.
    pub penalty_until_us: u64,
    pub elapsed_us: u64,
}

impl Default for PullState {
    fn default() -> Self {
        PullState {
            displacement_m: 0.0,
            applied_force_n: 0.0,
            last_velocity_mps: 0.0,
            penalty_until_us: 0,
            elapsed_us: 0,
        }
    }
}

impl PullState {
    pub fn elapsed_s(&self) -> f64 {
        self.elapsed_us as f64 / 1e6
    }

    /// Whether a step ending at `clock_us` falls inside a penalty hold.
    pub fn in_penalty(&self, clock_us: u64) -> bool {
        clock_us <= self.penalty_until_us
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistractionEvent {
    pub at_s: f64,
    pub kind: DistractionKind,
    pub fired: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GameEvent {
    Phase(SessionPhase),
    Calibrated { base_mean: f64, conc_mean: f64 },
    CalibrationRejected(String),
    Distraction(DistractionKind),
    PenaltyHold,
    WindOn,
}

impl fmt::Display for GameEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GameEvent::Phase(p) => write!(f, "phase:{p}"),
            GameEvent::Calibrated {
                base_mean,
                conc_mean,
            } => write!(f, "calibrated:base={base_mean:.4},conc={conc_mean:.4}"),
            GameEvent::CalibrationRejected(why) => write!(f, "calibration_rejected:{why}"),
            GameEvent::Distraction(k) => write!(f, "distraction:{}", k.as_str()),
            GameEvent::PenaltyHold => f.write_str("penalty_hold"),
            GameEvent::WindOn => f.write_str("wind_on"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedEvent {
    pub t_us: u64,
    pub event: GameEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub phase: SessionPhase,
    pub pull: PullState,
    /// Session clock, advanced by every tick.
    pub clock_us: u64,
    pub phase_started_us: u64,
    pub baseline_metrics: Vec<f64>,
    pub concentration_metrics: Vec<f64>,
    pub calibration: Option<CalibrationStats>,
    pub distractions: Vec<DistractionEvent>,
    pub events: Vec<LoggedEvent>,
    /// Phases visited, in order.
    pub history: Vec<SessionPhase>,
}

impl SessionState {
    fn log(&mut self, event: GameEvent, out: &mut Vec<GameEvent>) {
        self.events.push(LoggedEvent {
            t_us: self.clock_us,
            event: event.clone(),
        });
        out.push(event);
    }

    fn enter(&mut self, phase: SessionPhase, out: &mut Vec<GameEvent>) {
        self.phase = phase;
        self.phase_started_us = self.clock_us;
        self.history.push(phase);
        self.log(GameEvent::Phase(phase), out);
    }

    pub fn phase_elapsed_s(&self) -> f64 {
        (self.clock_us - self.phase_started_us) as f64 / 1e6
    }

    /// Adds a distraction that fires on the next pull step.
    pub fn inject_distraction(&mut self, kind: DistractionKind) {
        self.distractions.push(DistractionEvent {
            at_s: self.pull.elapsed_s(),
            kind,
            fired: false,
        });
    }
}

fn to_us(s: f64) -> u64 {
    (s * 1e6).round().max(0.0) as u64
}

pub fn start_session(config: &SessionConfig) -> Result<SessionState, GameError> {
    config.validate()?;
    Ok(SessionState {
        phase: SessionPhase::Idle,
        pull: PullState::default(),
        clock_us: 0,
        phase_started_us: 0,
        baseline_metrics: Vec::new(),
        concentration_metrics: Vec::new(),
        calibration: None,
        distractions: config
            .distractions
            .iter()
            .map(|d| DistractionEvent {
                at_s: d.at_s,
                kind: d.kind,
                fired: false,
            })
            .collect(),
        events: Vec::new(),
        history: vec![SessionPhase::Idle],
    })
}

/// Applies an operator command. Leaving `CalibConcentration` runs
/// calibration: an inseparable recording ends the session with
/// `Failure(calibration_invalid)`, while too few samples is returned as an
/// error and leaves the phase unchanged.
pub fn advance_phase(
    state: &mut SessionState,
    command: PhaseCommand,
    estimator: &EstimatorConfig,
) -> Result<Vec<GameEvent>, GameError> {
    use PhaseCommand::*;
    use SessionPhase::*;
    let mut out = Vec::new();
    match (state.phase, command) {
        (p, Abort) if !p.is_terminal() => state.enter(Failure(FailureReason::Aborted), &mut out),
        (Idle, StartCalibration) => state.enter(CalibBaseline, &mut out),
        (CalibBaseline, FinishPhase) => state.enter(CalibConcentration, &mut out),
        (CalibConcentration, FinishPhase | StartPull) => {
            match calibrate(
                &state.baseline_metrics,
                &state.concentration_metrics,
                estimator,
            ) {
                Ok(stats) => {
                    state.calibration = Some(stats);
                    state.log(
                        GameEvent::Calibrated {
                            base_mean: stats.base_mean,
                            conc_mean: stats.conc_mean,
                        },
                        &mut out,
                    );
                    state.enter(Pull, &mut out);
                }
                Err(e @ EstimatorError::InvalidCalibration { .. }) => {
                    state.log(GameEvent::CalibrationRejected(e.to_string()), &mut out);
                    state.enter(Failure(FailureReason::CalibrationInvalid), &mut out);
                }
                Err(e) => return Err(e.into()),
            }
        }
        (from, command) => return Err(GameError::IllegalTransition { from, command }),
    }
    Ok(out)
}

/// One dynamics step of the pull.
///
/// Progress is `v_max · score` while the applied force lies in
/// `[force_lo, force_hi]`, zero otherwise. Exceeding `force_hi` (or the
/// velocity cap) starts a penalty hold during which displacement is frozen.
pub fn step_pull(
    state: &mut SessionState,
    score: &ConcentrationScore,
    applied_force_n: f64,
    dt_s: f64,
    config: &SessionConfig,
) -> Result<Vec<GameEvent>, GameError> {
    if state.phase != SessionPhase::Pull {
        return Err(GameError::WrongPhase(state.phase));
    }
    let mut out = Vec::new();
    let dt_us = to_us(dt_s);
    state.clock_us += dt_us;
    state.pull.elapsed_us += dt_us;
    let elapsed_s = state.pull.elapsed_s();

    let due: Vec<DistractionKind> = state
        .distractions
        .iter_mut()
        .filter(|d| !d.fired && d.at_s <= elapsed_s)
        .map(|d| {
            d.fired = true;
            d.kind
        })
        .collect();
    for kind in due {
        state.log(GameEvent::Distraction(kind), &mut out);
    }

    let force = applied_force_n.max(0.0);
    let in_band = force >= config.force_lo_n && force <= config.force_hi_n;
    let candidate = if in_band {
        config.v_max_mps * score.value.clamp(0.0, 1.0)
    } else {
        0.0
    };
    if candidate > config.v_cap_mps || force > config.force_hi_n {
        // a hold still running from an earlier step is extended silently
        if state.pull.penalty_until_us <= state.clock_us - dt_us {
            state.log(GameEvent::PenaltyHold, &mut out);
        }
        state.pull.penalty_until_us = state.clock_us + to_us(config.penalty_hold_s);
    }
    let velocity = if state.pull.in_penalty(state.clock_us) {
        0.0
    } else {
        candidate
    };
    state.pull.applied_force_n = force;
    state.pull.last_velocity_mps = velocity;
    state.pull.displacement_m = (state.pull.displacement_m + velocity * dt_s).min(config.travel_m);

    if state.pull.displacement_m >= config.travel_m {
        state.enter(SessionPhase::Success, &mut out);
        state.log(GameEvent::WindOn, &mut out);
    } else if state.pull.elapsed_us >= to_us(config.pull_limit_s) {
        state.enter(SessionPhase::Failure(FailureReason::Timeout), &mut out);
    }
    Ok(out)
}

/// Inputs for one session tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickInputs {
    pub score: ConcentrationScore,
    /// Fresh relative-alpha metric, when one was computed this tick.
    pub metric: Option<f64>,
    pub gate: f64,
    pub applied_force_n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub command: FeedbackCommand,
    pub events: Vec<GameEvent>,
}

/// Session state plus the configuration it runs under.
#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    estimator: EstimatorConfig,
    feedback: FeedbackConfig,
    state: SessionState,
}

impl Session {
    pub fn new(
        config: SessionConfig,
        estimator: EstimatorConfig,
        feedback: FeedbackConfig,
    ) -> Result<Self, GameError> {
        let state = start_session(&config)?;
        Ok(Session {
            config,
            estimator,
            feedback,
            state,
        })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SessionState {
        &mut self.state
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn phase(&self) -> SessionPhase {
        self.state.phase
    }

    pub fn calibration(&self) -> Option<&CalibrationStats> {
        self.state.calibration.as_ref()
    }

    pub fn command(&mut self, command: PhaseCommand) -> Result<Vec<GameEvent>, GameError> {
        advance_phase(&mut self.state, command, &self.estimator)
    }

    /// Advances the session clock by `dt_s`, routing inputs by phase, and
    /// composes the feedback for the resulting state.
    pub fn tick(&mut self, inputs: &TickInputs, dt_s: f64) -> Result<TickOutput, GameError> {
        let mut events = Vec::new();
        match self.state.phase {
            SessionPhase::Pull => {
                events = step_pull(
                    &mut self.state,
                    &inputs.score,
                    inputs.applied_force_n,
                    dt_s,
                    &self.config,
                )?;
            }
            phase => {
                self.state.clock_us += to_us(dt_s);
                let (sink, limit) = match phase {
                    SessionPhase::CalibBaseline => (
                        Some(&mut self.state.baseline_metrics),
                        self.config.baseline_s,
                    ),
                    SessionPhase::CalibConcentration => (
                        Some(&mut self.state.concentration_metrics),
                        self.config.conc_calib_s,
                    ),
                    _ => (None, 0.0),
                };
                if let Some(sink) = sink {
                    sink.extend(inputs.metric);
                    if self.config.auto_advance && self.state.phase_elapsed_s() >= limit - 1e-9 {
                        match advance_phase(
                            &mut self.state,
                            PhaseCommand::FinishPhase,
                            &self.estimator,
                        ) {
                            Ok(ev) => events = ev,
                            // keep measuring until enough metric updates arrive
                            Err(GameError::Calibration(EstimatorError::InsufficientSamples {
                                ..
                            })) => {}
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
        }
        let score = match self.state.phase {
            SessionPhase::Pull | SessionPhase::Success => inputs.score.value,
            _ => 0.0,
        };
        let wind = self.state.phase == SessionPhase::Success;
        Ok(TickOutput {
            command: compose(score, wind, &self.feedback),
            events,
        })
    }
}
