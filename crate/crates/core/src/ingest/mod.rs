//! Sensor sample streams: the binary wire codec, seeded synthetic sources and
//! JSON Lines recordings.
//!
//! Every sample travels as a [`RawFrame`] tagged with its [`StreamKind`].
//! Timestamps are session-relative microseconds assigned by the source; the
//! engine never re-stamps them.

mod recording;
mod synth;
mod wire;

pub use recording::{record, write_descriptors, RecordError, RecordLine, Replay, ReplayError};
pub use synth::{
    synth_generate, AmplitudeSchedule, GazeSegment, SineComponent, SynthError, SyntheticProfile,
    SyntheticStream,
};
pub use wire::{
    decode_frame, decode_message, encode_frame, encode_handshake, FrameDecoder, WireError,
    WireMessage, FRAME_HEADER_LEN, MAGIC, WIRE_VERSION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which sensor a frame came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    Eeg,
    Gaze,
}

impl StreamKind {
    pub fn wire_code(self) -> u8 {
        match self {
            StreamKind::Eeg => 0,
            StreamKind::Gaze => 1,
        }
    }

    pub fn from_wire_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(StreamKind::Eeg),
            1 => Some(StreamKind::Gaze),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StreamKind::Eeg => "eeg",
            StreamKind::Gaze => "gaze",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DescriptorError {
    #[error("sample rate must be positive, got {0}")]
    BadSampleRate(f64),
    #[error("channel count must be positive")]
    NoChannels,
    #[error("channel count {count} does not match {labels} labels")]
    LabelMismatch { count: usize, labels: usize },
    #[error("gaze streams carry exactly 2 channels (yaw, pitch), got {0}")]
    GazeChannels(usize),
}

/// Shape of one sample stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamDescriptor {
    pub stream_kind: StreamKind,
    pub sample_rate_hz: f64,
    pub channel_count: usize,
    pub channel_labels: Vec<String>,
}

impl StreamDescriptor {
    pub fn new(
        stream_kind: StreamKind,
        sample_rate_hz: f64,
        channel_labels: Vec<String>,
    ) -> Result<Self, DescriptorError> {
        let desc = StreamDescriptor {
            stream_kind,
            sample_rate_hz,
            channel_count: channel_labels.len(),
            channel_labels,
        };
        desc.validate()?;
        Ok(desc)
    }

    /// 8 frontal channels at 256 Hz.
    pub fn default_eeg() -> Self {
        let labels = ["Fp1", "Fp2", "AF3", "AF4", "F3", "F4", "F7", "F8"];
        StreamDescriptor::new(
            StreamKind::Eeg,
            256.0,
            labels.iter().map(|s| s.to_string()).collect(),
        )
        .expect("default EEG descriptor is valid")
    }

    /// Yaw/pitch in degrees at 90 Hz.
    pub fn default_gaze() -> Self {
        StreamDescriptor::new(
            StreamKind::Gaze,
            90.0,
            vec!["yaw_deg".to_string(), "pitch_deg".to_string()],
        )
        .expect("default gaze descriptor is valid")
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        if !(self.sample_rate_hz > 0.0) || !self.sample_rate_hz.is_finite() {
            return Err(DescriptorError::BadSampleRate(self.sample_rate_hz));
        }
        if self.channel_count == 0 {
            return Err(DescriptorError::NoChannels);
        }
        if self.channel_count != self.channel_labels.len() {
            return Err(DescriptorError::LabelMismatch {
                count: self.channel_count,
                labels: self.channel_labels.len(),
            });
        }
        if self.stream_kind == StreamKind::Gaze && self.channel_count != 2 {
            return Err(DescriptorError::GazeChannels(self.channel_count));
        }
        Ok(())
    }

    /// Timestamp of the `index`-th sample, rounded to the nearest microsecond.
    pub fn sample_timestamp_us(&self, index: u64) -> u64 {
        (index as f64 * 1e6 / self.sample_rate_hz).round() as u64
    }
}

/// One timestamped multichannel sample. EEG values are µV, gaze values are
/// degrees (yaw, pitch).
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub stream_kind: StreamKind,
    pub timestamp_us: u64,
    pub values: Vec<f32>,
}

impl RawFrame {
    pub fn new(stream_kind: StreamKind, timestamp_us: u64, values: Vec<f32>) -> Self {
        RawFrame {
            stream_kind,
            timestamp_us,
            values,
        }
    }
}
