//! The closed loop: frames in, telemetry out.
//!
//! The engine is clocked by EEG sample timestamps. Each EEG frame runs every
//! dynamics tick due up to its timestamp; every `dynamics_hz / update_hz`-th
//! tick is a score tick that recomputes relative alpha, updates the gated
//! score and publishes a [`TelemetryRecord`]. Gaze frames only update the
//! gaze tracker.

use thiserror::Error;

use crate::config::EngineConfig;
use crate::dsp::{ChannelBank, DspError};
use crate::estimator::{normalize, ConcentrationScore, Estimator, ScoreMode};
use crate::feedback::compose;
use crate::game::{GameError, GameEvent, Session, SessionPhase, TickInputs};
use crate::gaze::{GazeError, GazeSample, GazeTracker};
use crate::ingest::{RawFrame, StreamKind};
use crate::telemetry::{OperatorCommand, PullTelemetry, TelemetryRecord};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Gaze(#[from] GazeError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("gaze frame carries {0} values, expected 2")]
    GazeShape(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Wall-clock cost of one score update, for latency accounting.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateTiming {
    pub updates: u64,
    pub max_ns: u128,
    pub total_ns: u128,
}

pub struct Engine {
    config: EngineConfig,
    bank: ChannelBank,
    gaze: GazeTracker,
    estimator: Estimator,
    session: Session,
    force_n: f64,
    tick_us: u64,
    ticks_per_score: u64,
    ticks: u64,
    latest_metric: Option<f64>,
    last_gate: f64,
    pending_events: Vec<String>,
    latest: Option<TelemetryRecord>,
    timing: UpdateTiming,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("phase", &self.session.phase())
            .field("ticks", &self.ticks)
            .finish()
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self, EngineError> {
        config
            .validate()
            .map_err(|e| EngineError::Config(e.to_string()))?;
        let bank = ChannelBank::new(&config.dsp, &config.ingest.eeg_descriptor())?;
        let tick_us = (1e6 / config.game.dynamics_hz).round() as u64;
        let ticks_per_score = (config.game.dynamics_hz / config.dsp.update_hz)
            .round()
            .max(1.0) as u64;
        let session = Session::new(
            config.game.clone(),
            config.estimator.clone(),
            config.feedback.clone(),
        )?;
        Ok(Engine {
            bank,
            gaze: GazeTracker::new(config.gaze.clone()),
            estimator: Estimator::new(config.estimator.clone()),
            session,
            force_n: 0.0,
            tick_us,
            ticks_per_score,
            ticks: 0,
            latest_metric: None,
            last_gate: 1.0,
            pending_events: Vec::new(),
            latest: None,
            timing: UpdateTiming::default(),
            config,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn phase(&self) -> SessionPhase {
        self.session.phase()
    }

    pub fn score(&self) -> ConcentrationScore {
        self.estimator.score()
    }

    pub fn clock_us(&self) -> u64 {
        self.ticks * self.tick_us
    }

    pub fn force_n(&self) -> f64 {
        self.force_n
    }

    pub fn set_force(&mut self, newtons: f64) {
        self.force_n = newtons.max(0.0);
    }

    pub fn timing(&self) -> UpdateTiming {
        self.timing
    }

    /// Most recent published record.
    pub fn latest_record(&self) -> Option<&TelemetryRecord> {
        self.latest.as_ref()
    }

    /// Current state as a record: the latest published one, or a synthesized
    /// record with no events before the first score tick.
    pub fn snapshot(&self) -> TelemetryRecord {
        if let Some(rec) = &self.latest {
            return rec.clone();
        }
        let pull = &self.session.state().pull;
        let score = self.estimator.score().value;
        TelemetryRecord {
            t_us: self.clock_us(),
            phase: self.phase().to_string(),
            score,
            relative_alpha: 0.0,
            gate: self.last_gate,
            feedback: compose(
                score,
                self.phase() == SessionPhase::Success,
                &self.config.feedback,
            ),
            pull: PullTelemetry {
                displacement_m: pull.displacement_m,
                applied_force_n: pull.applied_force_n,
                velocity_mps: pull.last_velocity_mps,
            },
            events: Vec::new(),
        }
    }

    /// Applies an operator command in arrival order. Resulting events appear
    /// in the next published record.
    pub fn apply(&mut self, command: OperatorCommand) -> Result<(), EngineError> {
        match command {
            OperatorCommand::SetForce { newtons } => self.set_force(newtons),
            OperatorCommand::SetMode { mode } => {
                self.estimator.set_mode(mode);
                let name = match mode {
                    ScoreMode::Linear => "linear",
                    ScoreMode::TimeAvg => "time_avg",
                };
                self.pending_events.push(format!("mode:{name}"));
            }
            OperatorCommand::InjectDistraction { distraction } => {
                self.session.state_mut().inject_distraction(distraction);
            }
            other => {
                let phase_cmd = other
                    .phase_command()
                    .expect("remaining commands change phase");
                let events = self.session.command(phase_cmd)?;
                self.push_events(&events);
            }
        }
        Ok(())
    }

    fn push_events(&mut self, events: &[GameEvent]) {
        self.pending_events
            .extend(events.iter().map(|e| e.to_string()));
    }

    /// Feeds one frame; returns any records published as a result.
    pub fn ingest(&mut self, frame: &RawFrame) -> Result<Vec<TelemetryRecord>, EngineError> {
        match frame.stream_kind {
            StreamKind::Gaze => {
                let [yaw, pitch] = frame.values[..] else {
                    return Err(EngineError::GazeShape(frame.values.len()));
                };
                self.gaze.push(GazeSample::new(
                    frame.timestamp_us,
                    yaw as f64,
                    pitch as f64,
                ))?;
                Ok(Vec::new())
            }
            StreamKind::Eeg => {
                self.bank.push_frame(frame)?;
                let mut out = Vec::new();
                while self.clock_us() + self.tick_us <= frame.timestamp_us {
                    if let Some(rec) = self.tick()? {
                        out.push(rec);
                    }
                }
                Ok(out)
            }
        }
    }

    fn tick(&mut self) -> Result<Option<TelemetryRecord>, EngineError> {
        self.ticks += 1;
        let score_tick = self.ticks.is_multiple_of(self.ticks_per_score);
        let mut metric = None;
        if score_tick {
            let started = std::time::Instant::now();
            metric = self.bank.relative_alpha();
            if metric.is_some() {
                self.latest_metric = metric;
            }
            self.last_gate = self.gaze.take_gate();
            if self.session.phase() == SessionPhase::Pull {
                if let (Some(m), Some(stats)) = (metric, self.session.calibration()) {
                    let raw = normalize(m, stats);
                    let dt_s = (self.tick_us * self.ticks_per_score) as f64 / 1e6;
                    self.estimator
                        .update_at(self.clock_us(), raw, self.last_gate, dt_s);
                }
            }
            let ns = started.elapsed().as_nanos();
            self.timing.updates += 1;
            self.timing.total_ns += ns;
            self.timing.max_ns = self.timing.max_ns.max(ns);
        }
        let inputs = TickInputs {
            score: self.estimator.score(),
            metric,
            gate: self.last_gate,
            applied_force_n: self.force_n,
        };
        let out = self.session.tick(&inputs, self.tick_us as f64 / 1e6)?;
        self.push_events(&out.events);
        // Terminal transitions publish immediately so the final state is never lost.
        let terminal_now = out
            .events
            .iter()
            .any(|e| matches!(e, GameEvent::Phase(p) if p.is_terminal()));
        if !score_tick && !terminal_now {
            return Ok(None);
        }
        let pull = &self.session.state().pull;
        let record = TelemetryRecord {
            t_us: self.clock_us(),
            phase: self.session.phase().to_string(),
            score: inputs.score.value,
            relative_alpha: self.latest_metric.unwrap_or(0.0),
            gate: self.last_gate,
            feedback: out.command,
            pull: PullTelemetry {
                displacement_m: pull.displacement_m,
                applied_force_n: pull.applied_force_n,
                velocity_mps: pull.last_velocity_mps,
            },
            events: std::mem::take(&mut self.pending_events),
        };
        self.latest = Some(record.clone());
        Ok(Some(record))
    }
}
