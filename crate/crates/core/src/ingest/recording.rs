//! JSON Lines recordings.
//!
//! ```text
//! {"k":"desc","stream":"eeg","rate":256.0,"channels":8,"labels":["Fp1",...]}
//! {"k":"desc","stream":"gaze","rate":90.0,"channels":2,"labels":["yaw_deg","pitch_deg"]}
//! {"k":"eeg","t":0,"v":[1.25,...]}
//! {"k":"gaze","t":0,"v":[0.0,0.0]}
//! ```

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{RawFrame, StreamDescriptor, StreamKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "k", rename_all = "lowercase")]
pub enum RecordLine {
    Desc {
        stream: StreamKind,
        rate: f64,
        channels: usize,
        labels: Vec<String>,
    },
    Eeg {
        t: u64,
        v: Vec<f32>,
    },
    Gaze {
        t: u64,
        v: Vec<f32>,
    },
}

impl RecordLine {
    pub fn from_frame(frame: &RawFrame) -> Self {
        let (t, v) = (frame.timestamp_us, frame.values.clone());
        match frame.stream_kind {
            StreamKind::Eeg => RecordLine::Eeg { t, v },
            StreamKind::Gaze => RecordLine::Gaze { t, v },
        }
    }

    pub fn from_descriptor(desc: &StreamDescriptor) -> Self {
        RecordLine::Desc {
            stream: desc.stream_kind,
            rate: desc.sample_rate_hz,
            channels: desc.channel_count,
            labels: desc.channel_labels.clone(),
        }
    }
}

#[derive(Debug, Error)]
#[error("sink failed after {written} frames: {source}")]
pub struct RecordError {
    pub written: usize,
    #[source]
    pub source: std::io::Error,
}

fn write_line<W: Write + ?Sized>(sink: &mut W, line: &RecordLine) -> std::io::Result<()> {
    serde_json::to_writer(&mut *sink, line)?;
    sink.write_all(b"\n")
}

/// Writes the descriptor header lines that open a recording.
pub fn write_descriptors<W: Write + ?Sized>(
    descriptors: &[StreamDescriptor],
    sink: &mut W,
) -> std::io::Result<()> {
    for d in descriptors {
        write_line(sink, &RecordLine::from_descriptor(d))?;
    }
    Ok(())
}

/// Appends one line per frame; returns the number written.
pub fn record<'a, W, I>(frames: I, sink: &mut W) -> Result<usize, RecordError>
where
    W: Write + ?Sized,
    I: IntoIterator<Item = &'a RawFrame>,
{
    let mut written = 0;
    for frame in frames {
        write_line(sink, &RecordLine::from_frame(frame))
            .map_err(|source| RecordError { written, source })?;
        written += 1;
    }
    sink.flush()
        .map_err(|source| RecordError { written, source })?;
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("line {line}: read failed: {message}")]
    Io { line: usize, message: String },
    #[error("line {line}: parse error: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: timestamp does not increase within its stream")]
    TimestampRegression { line: usize },
    #[error("line {line}: expected {expected} values, found {found}")]
    ChannelMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
}

/// Reads a recording back as frames in file order.
///
/// With `speed > 0` delivery is paced so inter-frame gaps approximate the
/// recorded deltas divided by `speed`; `speed == 0` disables pacing. The
/// iterator stops after the first error.
pub struct Replay<R> {
    source: R,
    speed: f64,
    line_no: usize,
    buf: String,
    descriptors: Vec<StreamDescriptor>,
    last_ts: HashMap<StreamKind, u64>,
    clock: Option<(Instant, u64)>,
    failed: bool,
}

impl<R: BufRead> Replay<R> {
    pub fn new(source: R, speed: f64) -> Self {
        Replay {
            source,
            speed: speed.max(0.0),
            line_no: 0,
            buf: String::new(),
            descriptors: Vec::new(),
            last_ts: HashMap::new(),
            clock: None,
            failed: false,
        }
    }

    /// Descriptors seen so far (normally the first two lines).
    pub fn descriptors(&self) -> &[StreamDescriptor] {
        &self.descriptors
    }

    fn pace(&mut self, t_us: u64) {
        if self.speed <= 0.0 {
            return;
        }
        let (start, t0) = *self.clock.get_or_insert((Instant::now(), t_us));
        let due = Duration::from_secs_f64(t_us.saturating_sub(t0) as f64 / 1e6 / self.speed);
        let elapsed = start.elapsed();
        if due > elapsed {
            std::thread::sleep(due - elapsed);
        }
    }

    fn fail(&mut self, err: ReplayError) -> Option<Result<RawFrame, ReplayError>> {
        self.failed = true;
        Some(Err(err))
    }
}

impl<R: BufRead> Iterator for Replay<R> {
    type Item = Result<RawFrame, ReplayError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            self.line_no += 1;
            let line = self.line_no;
            match self.source.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    return self.fail(ReplayError::Io {
                        line,
                        message: e.to_string(),
                    })
                }
            }
            if self.buf.trim().is_empty() {
                continue;
            }
            let parsed: RecordLine = match serde_json::from_str(self.buf.trim_end()) {
                Ok(p) => p,
                Err(e) => {
                    return self.fail(ReplayError::ParseError {
                        line,
                        message: e.to_string(),
                    })
                }
            };
            let (kind, t, v) = match parsed {
                RecordLine::Desc {
                    stream,
                    rate,
                    channels,
                    labels,
                } => {
                    let desc = StreamDescriptor {
                        stream_kind: stream,
                        sample_rate_hz: rate,
                        channel_count: channels,
                        channel_labels: labels,
                    };
                    if let Err(e) = desc.validate() {
                        return self.fail(ReplayError::ParseError {
                            line,
                            message: e.to_string(),
                        });
                    }
                    self.descriptors.retain(|d| d.stream_kind != stream);
                    self.descriptors.push(desc);
                    continue;
                }
                RecordLine::Eeg { t, v } => (StreamKind::Eeg, t, v),
                RecordLine::Gaze { t, v } => (StreamKind::Gaze, t, v),
            };
            if let Some(desc) = self.descriptors.iter().find(|d| d.stream_kind == kind) {
                if desc.channel_count != v.len() {
                    let expected = desc.channel_count;
                    return self.fail(ReplayError::ChannelMismatch {
                        line,
                        expected,
                        found: v.len(),
                    });
                }
            }
            if let Some(&prev) = self.last_ts.get(&kind) {
                if t <= prev {
                    return self.fail(ReplayError::TimestampRegression { line });
                }
            }
            self.last_ts.insert(kind, t);
            self.pace(t);
            return Some(Ok(RawFrame::new(kind, t, v)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn frames() -> Vec<RawFrame> {
        vec![
            RawFrame::new(StreamKind::Eeg, 0, vec![1.0, -2.5]),
            RawFrame::new(StreamKind::Gaze, 0, vec![0.0, 0.0]),
            RawFrame::new(StreamKind::Eeg, 3906, vec![0.1, 1e-7]),
            RawFrame::new(StreamKind::Gaze, 11111, vec![12.5, -3.0]),
            RawFrame::new(StreamKind::Eeg, 7813, vec![f32::MAX, f32::MIN_POSITIVE]),
        ]
    }

    #[test]
    fn frame_line_format() {
        let mut out = Vec::new();
        record(&frames()[..1], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "{\"k\":\"eeg\",\"t\":0,\"v\":[1.0,-2.5]}\n"
        );
    }

    #[test]
    fn empty_sequence_writes_nothing() {
        let mut out = Vec::new();
        assert_eq!(record(&[], &mut out).unwrap(), 0);
        assert!(out.is_empty());
    }

    #[test]
    fn record_then_replay_preserves_interleaving() {
        let mut out = Vec::new();
        let descs = [
            StreamDescriptor::new(StreamKind::Eeg, 256.0, vec!["a".into(), "b".into()]).unwrap(),
            StreamDescriptor::default_gaze(),
        ];
        write_descriptors(&descs, &mut out).unwrap();
        assert_eq!(record(&frames(), &mut out).unwrap(), 5);
        let mut replay = Replay::new(Cursor::new(out), 0.0);
        let back: Vec<RawFrame> = replay.by_ref().collect::<Result<_, _>>().unwrap();
        assert_eq!(back, frames());
        assert_eq!(replay.descriptors(), &descs);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let mut text = String::new();
        for i in 0..6 {
            text.push_str(&format!("{{\"k\":\"eeg\",\"t\":{i},\"v\":[0.0]}}\n"));
        }
        text.push_str("{\"k\":\"eeg\",\"t\":\n");
        let errs: Vec<_> = Replay::new(Cursor::new(text), 0.0)
            .filter_map(Result::err)
            .collect();
        assert!(matches!(
            errs[..],
            [ReplayError::ParseError { line: 7, .. }]
        ));
    }

    #[test]
    fn timestamp_regression_within_stream() {
        let text = "{\"k\":\"eeg\",\"t\":10,\"v\":[0.0]}\n\
                    {\"k\":\"gaze\",\"t\":5,\"v\":[0.0,0.0]}\n\
                    {\"k\":\"eeg\",\"t\":10,\"v\":[0.0]}\n";
        let out: Vec<_> = Replay::new(Cursor::new(text), 0.0).collect();
        assert_eq!(out.len(), 3);
        assert_eq!(out[2], Err(ReplayError::TimestampRegression { line: 3 }));
    }

    #[test]
    fn channel_count_checked_against_descriptor() {
        let mut out = Vec::new();
        write_descriptors(&[StreamDescriptor::default_gaze()], &mut out).unwrap();
        out.extend_from_slice(b"{\"k\":\"gaze\",\"t\":1,\"v\":[0.0]}\n");
        let res: Vec<_> = Replay::new(Cursor::new(out), 0.0).collect();
        assert_eq!(
            res,
            vec![Err(ReplayError::ChannelMismatch {
                line: 2,
                expected: 2,
                found: 1
            })]
        );
    }

    #[test]
    fn paced_replay_respects_speed() {
        let text =
            "{\"k\":\"eeg\",\"t\":0,\"v\":[0.0]}\n{\"k\":\"eeg\",\"t\":100000,\"v\":[0.0]}\n";
        let start = Instant::now();
        let n = Replay::new(Cursor::new(text), 2.0).count();
        let elapsed = start.elapsed();
        assert_eq!(n, 2);
        assert!(elapsed >= Duration::from_millis(45), "{elapsed:?}");
        assert!(elapsed < Duration::from_millis(500), "{elapsed:?}");
    }

    struct FailAfter(usize);

    impl Write for FailAfter {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            if buf == b"\n" {
                if self.0 == 0 {
                    return Err(std::io::Error::other("disk full"));
                }
                self.0 -= 1;
            }
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn sink_failure_reports_partial_count() {
        let err = record(&frames(), &mut FailAfter(2)).unwrap_err();
        assert_eq!(err.written, 2);
    }
}
