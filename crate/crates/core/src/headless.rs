//! Scripted sessions without pacing: synthetic EEG/gaze, a force trace and
//! optional operator commands go in, a telemetry JSONL log comes out.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EngineConfig;
use crate::dsp::ALPHA_BAND_HZ;
use crate::engine::{Engine, EngineError};
use crate::game::SessionPhase;
use crate::ingest::{record, write_descriptors, SynthError, SyntheticProfile, SyntheticStream};
use crate::telemetry::OperatorCommand;

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_GAME_FAILURE: i32 = 2;

/// Applied force from `from_s` seconds after the pull starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceStep {
    pub from_s: f64,
    pub newtons: f64,
}

/// Scales alpha-band synthetic components after each distraction cue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistractionDip {
    #[serde(default = "DistractionDip::default_duration")]
    pub duration_s: f64,
    pub factor: f64,
}

impl DistractionDip {
    fn default_duration() -> f64 {
        2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCommand {
    /// Session time.
    pub at_s: f64,
    pub command: OperatorCommand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadlessScript {
    /// Overrides the profile seed when set.
    #[serde(default)]
    pub seed: Option<u64>,
    pub profile: SyntheticProfile,
    #[serde(default)]
    pub force: Vec<ForceStep>,
    #[serde(default)]
    pub distraction_dip: Option<DistractionDip>,
    /// Defaults to the calibration durations plus the pull limit plus 5 s.
    #[serde(default)]
    pub max_duration_s: Option<f64>,
    /// Defaults to a single `start_calibration` at t = 0.
    #[serde(default)]
    pub commands: Vec<ScriptedCommand>,
}

impl HeadlessScript {
    pub fn from_json_str(text: &str) -> Result<Self, HeadlessError> {
        serde_json::from_str(text).map_err(|e| HeadlessError::Script(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HeadlessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn force_at(&self, pull_elapsed_s: f64) -> f64 {
        self.force
            .iter()
            .take_while(|s| s.from_s <= pull_elapsed_s)
            .last()
            .map_or(0.0, |s| s.newtons)
    }
}

#[derive(Debug, Error)]
pub enum HeadlessError {
    #[error("bad script: {0}")]
    Script(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("session still in phase {0} when the script ran out")]
    Unfinished(SessionPhase),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadlessOutcome {
    pub final_phase: SessionPhase,
    pub exit_code: i32,
    pub records: usize,
    pub frames: usize,
    pub end_us: u64,
}

/// Runs `script` to completion, writing one telemetry record per line to
/// `telemetry`. Frames are also recorded to `frames` when given.
pub fn run_headless(
    config: &EngineConfig,
    script: &HeadlessScript,
    telemetry: &mut dyn Write,
    mut frames: Option<&mut dyn Write>,
) -> Result<HeadlessOutcome, HeadlessError> {
    let mut profile = script.profile.clone();
    if let Some(seed) = script.seed {
        profile.seed = seed;
    }
    let mut eeg = SyntheticStream::new(profile.clone(), config.ingest.eeg_descriptor())?;
    let mut gaze = SyntheticStream::new(profile, config.ingest.gaze_descriptor())?;
    let mut engine = Engine::new(config.clone())?;

    let mut commands = if script.commands.is_empty() {
        vec![ScriptedCommand {
            at_s: 0.0,
            command: OperatorCommand::StartCalibration,
        }]
    } else {
        script.commands.clone()
    };
    commands.sort_by(|a, b| a.at_s.total_cmp(&b.at_s));
    let mut commands = commands.into_iter().peekable();

    let game = &config.game;
    let max_s = script
        .max_duration_s
        .unwrap_or(game.baseline_s + game.conc_calib_s + game.pull_limit_s + 5.0);
    let max_us = (max_s * 1e6).round() as u64;

    if let Some(sink) = frames.as_deref_mut() {
        write_descriptors(&[eeg.descriptor().clone(), gaze.descriptor().clone()], sink)?;
    }

    let mut n_records = 0;
    let mut n_frames = 0;
    loop {
        let source = if eeg.next_timestamp_us() <= gaze.next_timestamp_us() {
            &mut eeg
        } else {
            &mut gaze
        };
        let t_us = source.next_timestamp_us();
        if t_us > max_us {
            break;
        }
        while let Some(c) = commands.next_if(|c| (c.at_s * 1e6).round() as u64 <= t_us) {
            // Rejected commands behave as they would from an operator: ignored.
            let _ = engine.apply(c.command);
        }
        if engine.phase() == SessionPhase::Pull {
            let elapsed = engine.session().state().pull.elapsed_s();
            engine.set_force(script.force_at(elapsed));
        }
        let frame = source.next().expect("synthetic streams are unbounded");
        if let Some(sink) = frames.as_deref_mut() {
            record(std::iter::once(&frame), sink).map_err(|e| e.source)?;
        }
        n_frames += 1;
        for rec in engine.ingest(&frame)? {
            serde_json::to_writer(&mut *telemetry, &rec).map_err(std::io::Error::from)?;
            telemetry.write_all(b"\n")?;
            n_records += 1;
            if let Some(dip) = script.distraction_dip {
                let start = rec.t_us as f64 / 1e6;
                for _ in rec.events.iter().filter(|e| e.starts_with("distraction:")) {
                    eeg.add_dip(
                        start,
                        start + dip.duration_s,
                        dip.factor,
                        ALPHA_BAND_HZ.0,
                        ALPHA_BAND_HZ.1,
                    );
                }
            }
        }
        if engine.phase().is_terminal() {
            break;
        }
    }
    telemetry.flush()?;
    let final_phase = engine.phase();
    let exit_code = match final_phase {
        SessionPhase::Success => EXIT_SUCCESS,
        SessionPhase::Failure(_) => EXIT_GAME_FAILURE,
        other => return Err(HeadlessError::Unfinished(other)),
    };
    Ok(HeadlessOutcome {
        final_phase,
        exit_code,
        records: n_records,
        frames: n_frames,
        end_us: engine.clock_us(),
    })
}

/// File-based wrapper around [`run_headless`].
pub fn run_headless_to_path(
    config: &EngineConfig,
    script: &HeadlessScript,
    out_path: impl AsRef<Path>,
    record_path: Option<&Path>,
) -> Result<HeadlessOutcome, HeadlessError> {
    let mut out = BufWriter::new(File::create(out_path)?);
    let mut rec = record_path
        .map(|p| File::create(p).map(BufWriter::new))
        .transpose()?;
    let outcome = run_headless(
        config,
        script,
        &mut out,
        rec.as_mut().map(|w| w as &mut dyn Write),
    )?;
    if let Some(mut w) = rec {
        w.flush()?;
    }
    Ok(outcome)
}
