//! Binary sample-frame codec.
//!
//! Layout (little-endian):
//!
//! ```text
//! 0..4   magic "SWRD"
//! 4      version (1)
//! 5      stream kind (0 = eeg, 1 = gaze; bit 7 set = handshake)
//! 6      channel count
//! 7      reserved (0)
//! 8..16  timestamp_us u64
//! 16..   channel_count x f32
//! ```
//!
//! A handshake frame shares the 16-byte header and carries
//! `sample_rate_hz: f32`, `channel_count: u8`, then one `u8` length-prefixed
//! UTF-8 label per channel.

use thiserror::Error;

use super::{RawFrame, StreamDescriptor, StreamKind};

pub const MAGIC: [u8; 4] = *b"SWRD";
pub const WIRE_VERSION: u8 = 1;
pub const FRAME_HEADER_LEN: usize = 16;

const HANDSHAKE_BIT: u8 = 0x80;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("frame length mismatch: expected {expected} bytes, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("unknown stream kind {0:#04x}")]
    UnknownStreamKind(u8),
    #[error("channel count {0} exceeds 255")]
    ChannelOverflow(usize),
    #[error("malformed handshake: {0}")]
    BadHandshake(String),
}

/// A decoded unit from the sensor socket.
#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    Handshake(StreamDescriptor),
    Frame(RawFrame),
}

fn header(kind_byte: u8, channel_count: u8, timestamp_us: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(WIRE_VERSION);
    out.push(kind_byte);
    out.push(channel_count);
    out.push(0);
    out.extend_from_slice(&timestamp_us.to_le_bytes());
    out
}

pub fn encode_frame(frame: &RawFrame) -> Result<Vec<u8>, WireError> {
    let count = frame.values.len();
    let count_u8 = u8::try_from(count).map_err(|_| WireError::ChannelOverflow(count))?;
    let mut out = header(frame.stream_kind.wire_code(), count_u8, frame.timestamp_us);
    out.reserve(4 * count);
    for v in &frame.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn encode_handshake(desc: &StreamDescriptor) -> Result<Vec<u8>, WireError> {
    let count = desc.channel_labels.len();
    let count_u8 = u8::try_from(count).map_err(|_| WireError::ChannelOverflow(count))?;
    let mut out = header(desc.stream_kind.wire_code() | HANDSHAKE_BIT, count_u8, 0);
    out.extend_from_slice(&(desc.sample_rate_hz as f32).to_le_bytes());
    out.push(count_u8);
    for label in &desc.channel_labels {
        let bytes = label.as_bytes();
        let len = u8::try_from(bytes.len()).map_err(|_| {
            WireError::BadHandshake(format!("label {label:?} longer than 255 bytes"))
        })?;
        out.push(len);
        out.extend_from_slice(bytes);
    }
    Ok(out)
}

struct Header {
    kind: StreamKind,
    handshake: bool,
    channel_count: usize,
    timestamp_us: u64,
}

/// Validates the fixed header. `bytes` must hold at least the header.
fn parse_header(bytes: &[u8]) -> Result<Header, WireError> {
    if bytes[0..4] != MAGIC {
        return Err(WireError::BadMagic);
    }
    if bytes[4] != WIRE_VERSION {
        return Err(WireError::UnsupportedVersion(bytes[4]));
    }
    let kind_byte = bytes[5];
    let kind = StreamKind::from_wire_code(kind_byte & !HANDSHAKE_BIT)
        .ok_or(WireError::UnknownStreamKind(kind_byte))?;
    let mut ts = [0u8; 8];
    ts.copy_from_slice(&bytes[8..16]);
    Ok(Header {
        kind,
        handshake: kind_byte & HANDSHAKE_BIT != 0,
        channel_count: bytes[6] as usize,
        timestamp_us: u64::from_le_bytes(ts),
    })
}

enum Parsed {
    Complete(WireMessage, usize),
    /// Header is fine but more bytes are needed; carries the minimum total.
    Incomplete(usize),
}

fn parse(bytes: &[u8]) -> Result<Parsed, WireError> {
    if bytes.len() < FRAME_HEADER_LEN {
        // Reject early garbage without waiting for a full header.
        let n = bytes.len().min(4);
        if bytes[..n] != MAGIC[..n] {
            return Err(WireError::BadMagic);
        }
        return Ok(Parsed::Incomplete(FRAME_HEADER_LEN));
    }
    let h = parse_header(bytes)?;
    if !h.handshake {
        let total = FRAME_HEADER_LEN + 4 * h.channel_count;
        if bytes.len() < total {
            return Ok(Parsed::Incomplete(total));
        }
        let values = bytes[FRAME_HEADER_LEN..total]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let frame = RawFrame::new(h.kind, h.timestamp_us, values);
        return Ok(Parsed::Complete(WireMessage::Frame(frame), total));
    }

    let mut pos = FRAME_HEADER_LEN;
    if bytes.len() < pos + 5 {
        return Ok(Parsed::Incomplete(pos + 5));
    }
    let rate = f32::from_le_bytes([bytes[pos], bytes[pos + 1], bytes[pos + 2], bytes[pos + 3]]);
    let count = bytes[pos + 4] as usize;
    pos += 5;
    if count != h.channel_count {
        return Err(WireError::BadHandshake(format!(
            "header declares {} channels, body {}",
            h.channel_count, count
        )));
    }
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        if bytes.len() < pos + 1 {
            return Ok(Parsed::Incomplete(pos + 1));
        }
        let len = bytes[pos] as usize;
        pos += 1;
        if bytes.len() < pos + len {
            return Ok(Parsed::Incomplete(pos + len));
        }
        let label = std::str::from_utf8(&bytes[pos..pos + len])
            .map_err(|e| WireError::BadHandshake(e.to_string()))?;
        labels.push(label.to_string());
        pos += len;
    }
    let desc = StreamDescriptor::new(h.kind, rate as f64, labels)
        .map_err(|e| WireError::BadHandshake(e.to_string()))?;
    Ok(Parsed::Complete(WireMessage::Handshake(desc), pos))
}

/// Decodes one complete data frame from the front of `bytes`, returning the
/// frame and the number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(RawFrame, usize), WireError> {
    match decode_message(bytes)? {
        (WireMessage::Frame(f), n) => Ok((f, n)),
        (WireMessage::Handshake(_), _) => Err(WireError::UnknownStreamKind(bytes[5])),
    }
}

/// Decodes one complete frame or handshake from the front of `bytes`.
pub fn decode_message(bytes: &[u8]) -> Result<(WireMessage, usize), WireError> {
    match parse(bytes)? {
        Parsed::Complete(msg, n) => Ok((msg, n)),
        Parsed::Incomplete(expected) => Err(WireError::LengthMismatch {
            expected,
            actual: bytes.len(),
        }),
    }
}

/// Incremental decoder for a byte stream. After a bad frame it scans forward
/// byte by byte for the next magic sequence.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    skipped: usize,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes discarded while resynchronising.
    pub fn bytes_skipped(&self) -> usize {
        self.skipped
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next message, an error for a rejected frame, or `None` when more bytes
    /// are needed.
    pub fn next_message(&mut self) -> Option<Result<WireMessage, WireError>> {
        if self.buf.is_empty() {
            return None;
        }
        match parse(&self.buf) {
            Ok(Parsed::Complete(msg, n)) => {
                self.buf.drain(..n);
                Some(Ok(msg))
            }
            Ok(Parsed::Incomplete(_)) => None,
            Err(e) => {
                self.resync();
                Some(Err(e))
            }
        }
    }

    fn resync(&mut self) {
        // Skip at least one byte, then jump to the next full or partial magic.
        let start = 1.min(self.buf.len());
        let cut = (start..self.buf.len())
            .find(|&i| {
                let tail = &self.buf[i..];
                let n = tail.len().min(MAGIC.len());
                tail[..n] == MAGIC[..n]
            })
            .unwrap_or(self.buf.len());
        self.skipped += cut;
        self.buf.drain(..cut);
    }
}

impl Iterator for FrameDecoder {
    type Item = Result<WireMessage, WireError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_message()
    }
}
