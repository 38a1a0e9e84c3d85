//! Real-time concentration biofeedback.
//!
//! EEG and gaze sample streams feed a relative-alpha estimate that is
//! calibrated per user, gated by gaze stability and smoothed into a score in
//! `[0, 1]`. The score drives multimodal feedback commands and the speed at
//! which a virtual sword can be drawn from its altar.
//!
//! Modules, in data-flow order:
//!
//! - [`ingest`]: wire codec, synthetic sources, JSONL recordings
//! - [`dsp`]: sample windows, Welch spectra, band power, relative alpha
//! - [`gaze`]: fixation/saccade classification and the update gate
//! - [`estimator`]: calibration, normalization, score smoothing
//! - [`feedback`]: score → stimulus parameters
//! - [`game`]: the session state machine
//! - [`engine`]: the loop that composes all of the above
//! - [`headless`]: scripted runs that write a telemetry log

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dsp;
pub mod engine;
pub mod estimator;
pub mod feedback;
pub mod game;
pub mod gaze;
pub mod headless;
pub mod ingest;
pub mod telemetry;

pub use config::{load_config, ConfigError, EngineConfig};
pub use engine::{Engine, EngineError};
pub use telemetry::{OperatorCommand, TelemetryRecord};
