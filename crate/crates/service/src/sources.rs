//! Ingestion stages: one producer per stream, each feeding a bounded queue.
//! Producers wait when their queue is full; frames are never dropped here.

use std::io::BufReader;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use focusloop::config::IngestConfig;
use focusloop::ingest::{
    FrameDecoder, RawFrame, Replay, StreamDescriptor, StreamKind, SyntheticProfile,
    SyntheticStream, WireMessage,
};
use tokio::io::AsyncReadExt;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tracing::{info, warn};

use crate::ServeError;

#[derive(Debug, Clone)]
pub enum Source {
    /// Deterministic synthetic EEG and gaze. `speed` scales pacing; 0 runs
    /// as fast as the session loop consumes.
    Synth {
        profile: SyntheticProfile,
        speed: f64,
    },
    /// A JSONL recording.
    Replay { path: PathBuf, speed: f64 },
    /// Binary sensor protocol over TCP.
    Tcp { listen: String },
}

#[derive(Debug)]
pub struct Streams {
    pub eeg: mpsc::Receiver<RawFrame>,
    pub gaze: mpsc::Receiver<RawFrame>,
    /// Bound address of the sensor listener, for TCP sources.
    pub sensor_addr: Option<SocketAddr>,
}

struct Senders {
    eeg: mpsc::Sender<RawFrame>,
    gaze: mpsc::Sender<RawFrame>,
}

impl Senders {
    fn for_kind(&self, kind: StreamKind) -> &mpsc::Sender<RawFrame> {
        match kind {
            StreamKind::Eeg => &self.eeg,
            StreamKind::Gaze => &self.gaze,
        }
    }
}

pub async fn start_source(source: Source, ingest: &IngestConfig) -> Result<Streams, ServeError> {
    let cap = ingest.queue_capacity.max(1);
    let (eeg_tx, eeg) = mpsc::channel(cap);
    let (gaze_tx, gaze) = mpsc::channel(cap);
    let senders = Senders {
        eeg: eeg_tx,
        gaze: gaze_tx,
    };
    let descriptors = [ingest.eeg_descriptor(), ingest.gaze_descriptor()];
    let mut sensor_addr = None;
    match source {
        Source::Synth { profile, speed } => {
            for (desc, tx) in descriptors.into_iter().zip([senders.eeg, senders.gaze]) {
                let stream = SyntheticStream::new(profile.clone(), desc)
                    .map_err(|e| ServeError::Source(e.to_string()))?;
                tokio::spawn(paced_synth(stream, speed, tx));
            }
        }
        Source::Replay { path, speed } => {
            let file = std::fs::File::open(&path)
                .map_err(|e| ServeError::Source(format!("{}: {e}", path.display())))?;
            tokio::task::spawn_blocking(move || {
                replay_into(
                    Replay::new(BufReader::new(file), speed),
                    &descriptors,
                    &senders,
                )
            });
        }
        Source::Tcp { listen } => {
            let listener = TcpListener::bind(&listen)
                .await
                .map_err(|source| ServeError::Bind {
                    addr: listen,
                    source,
                })?;
            let addr = listener.local_addr()?;
            info!(%addr, "sensor listener ready");
            sensor_addr = Some(addr);
            tokio::spawn(accept_sensors(listener, descriptors, senders));
        }
    }
    Ok(Streams {
        eeg,
        gaze,
        sensor_addr,
    })
}

async fn paced_synth(stream: SyntheticStream, speed: f64, tx: mpsc::Sender<RawFrame>) {
    let start = tokio::time::Instant::now();
    for frame in stream {
        if speed > 0.0 {
            let due = Duration::from_secs_f64(frame.timestamp_us as f64 / 1e6 / speed);
            tokio::time::sleep_until(start + due).await;
        }
        if tx.send(frame).await.is_err() {
            return;
        }
    }
}

fn replay_into(
    mut replay: Replay<BufReader<std::fs::File>>,
    expected: &[StreamDescriptor; 2],
    senders: &Senders,
) {
    let mut checked = false;
    while let Some(item) = replay.next() {
        let frame = match item {
            Ok(f) => f,
            Err(e) => {
                warn!("replay stopped: {e}");
                return;
            }
        };
        if !checked {
            for d in replay.descriptors() {
                let want = &expected[d.stream_kind.wire_code() as usize];
                if d.channel_count != want.channel_count {
                    warn!(
                        "replay {} stream has {} channels, configured {}",
                        d.stream_kind.as_str(),
                        d.channel_count,
                        want.channel_count
                    );
                    return;
                }
            }
            checked = true;
        }
        if senders
            .for_kind(frame.stream_kind)
            .blocking_send(frame)
            .is_err()
        {
            return;
        }
    }
    info!("replay finished");
}

async fn accept_sensors(listener: TcpListener, expected: [StreamDescriptor; 2], senders: Senders) {
    let senders = std::sync::Arc::new(senders);
    loop {
        match listener.accept().await {
            Ok((sock, peer)) => {
                info!(%peer, "sensor connected");
                let senders = senders.clone();
                let expected = expected.clone();
                tokio::spawn(async move {
                    match sensor_connection(sock, &expected, &senders).await {
                        Ok(()) => info!(%peer, "sensor disconnected"),
                        Err(why) => warn!(%peer, "sensor dropped: {why}"),
                    }
                });
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}

/// Reads one sensor connection until EOF. A handshake that disagrees with the
/// configured stream shape closes the connection; malformed frames are
/// reported and skipped.
async fn sensor_connection(
    mut sock: TcpStream,
    expected: &[StreamDescriptor; 2],
    senders: &Senders,
) -> Result<(), String> {
    let mut decoder = FrameDecoder::new();
    let mut buf = vec![0u8; 16 * 1024];
    loop {
        let n = sock.read(&mut buf).await.map_err(|e| e.to_string())?;
        if n == 0 {
            return Ok(());
        }
        decoder.push(&buf[..n]);
        while let Some(msg) = decoder.next_message() {
            match msg {
                Ok(WireMessage::Handshake(desc)) => {
                    let want = &expected[desc.stream_kind.wire_code() as usize];
                    if desc.channel_count != want.channel_count {
                        return Err(format!(
                            "{} handshake declares {} channels, configured {}",
                            desc.stream_kind.as_str(),
                            desc.channel_count,
                            want.channel_count
                        ));
                    }
                    if desc.sample_rate_hz != want.sample_rate_hz {
                        warn!(
                            "{} handshake rate {} Hz differs from configured {} Hz",
                            desc.stream_kind.as_str(),
                            desc.sample_rate_hz,
                            want.sample_rate_hz
                        );
                    }
                }
                Ok(WireMessage::Frame(frame)) => {
                    let want = &expected[frame.stream_kind.wire_code() as usize];
                    if frame.values.len() != want.channel_count {
                        warn!(
                            "dropping {} frame with {} values",
                            frame.stream_kind.as_str(),
                            frame.values.len()
                        );
                        continue;
                    }
                    if senders
                        .for_kind(frame.stream_kind)
                        .send(frame)
                        .await
                        .is_err()
                    {
                        return Ok(());
                    }
                }
                Err(e) => warn!("bad sensor data ({e}); resynchronizing"),
            }
        }
    }
}
