//! The running service: one session loop owning the engine, one acceptor for
//! dashboard WebSocket clients, and the ingestion stages in between.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use focusloop::game::SessionPhase;
use focusloop::ingest::{record, write_descriptors, RawFrame, StreamKind};
use focusloop::{Engine, EngineConfig, EngineError, OperatorCommand};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tracing::{info, warn};

use crate::fanout::Fanout;
use crate::sources::{start_source, Source, Streams};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("source: {0}")]
    Source(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("session loop failed: {0}")]
    Session(String),
}

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Record every ingested frame to this JSONL file.
    pub record: Option<PathBuf>,
}

struct CommandRequest {
    command: OperatorCommand,
    reply: oneshot::Sender<Result<(), String>>,
}

#[derive(Clone)]
struct AppState {
    fanout: Fanout,
    commands: mpsc::Sender<CommandRequest>,
    stop: watch::Receiver<bool>,
}

/// A started service. Dropping it leaves the tasks running; call
/// [`shutdown`](Self::shutdown) to stop them.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub sensor_addr: Option<SocketAddr>,
    stop: watch::Sender<bool>,
    session: JoinHandle<Result<SessionPhase, ServeError>>,
    http: JoinHandle<()>,
}

impl ServerHandle {
    /// Stops accepting clients and sources; returns the final session phase.
    pub async fn shutdown(self) -> Result<SessionPhase, ServeError> {
        let _ = self.stop.send(true);
        let phase = self
            .session
            .await
            .map_err(|e| ServeError::Session(e.to_string()))??;
        if tokio::time::timeout(Duration::from_secs(2), self.http)
            .await
            .is_err()
        {
            warn!("http server did not stop in time");
        }
        Ok(phase)
    }
}

/// Binds the client listener (and the sensor listener for TCP sources) and
/// starts every task.
pub async fn serve(
    config: EngineConfig,
    source: Source,
    options: ServeOptions,
) -> Result<ServerHandle, ServeError> {
    let engine = Engine::new(config.clone())?;
    let fanout = Fanout::new(config.service.client_queue, &engine.snapshot());
    let listen = config.service.listen.clone();
    let listener = TcpListener::bind(&listen)
        .await
        .map_err(|source| ServeError::Bind {
            addr: listen,
            source,
        })?;
    let addr = listener.local_addr()?;

    let streams = start_source(source, &config.ingest).await?;
    let sensor_addr = streams.sensor_addr;
    let recorder = match options.record {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_descriptors(
                &[
                    config.ingest.eeg_descriptor(),
                    config.ingest.gaze_descriptor(),
                ],
                &mut w,
            )?;
            Some(w)
        }
        None => None,
    };

    let (stop_tx, stop_rx) = watch::channel(false);
    let (cmd_tx, cmd_rx) = mpsc::channel(256);
    let session = tokio::spawn(session_loop(
        engine,
        streams,
        cmd_rx,
        fanout.clone(),
        recorder,
        stop_rx.clone(),
    ));

    let state = AppState {
        fanout,
        commands: cmd_tx,
        stop: stop_rx.clone(),
    };
    let app = Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/snapshot", get(snapshot))
        .with_state(state);
    let mut http_stop = stop_rx;
    let http = tokio::spawn(async move {
        let shutdown = async move { stopped(&mut http_stop).await };
        if let Err(e) = axum::serve(listener, app)
            .with_graceful_shutdown(shutdown)
            .await
        {
            warn!("http server: {e}");
        }
    });
    info!(%addr, "telemetry listening");
    Ok(ServerHandle {
        addr,
        sensor_addr,
        stop: stop_tx,
        session,
        http,
    })
}

/// How long a frame waits for the other stream before that stream is
/// treated as stalled and frames are released without it.
const STALL: Duration = Duration::from_millis(50);

/// Orders frames from the two queues by timestamp (EEG first on ties), so a
/// score tick sees every gaze sample up to its time.
#[derive(Debug, Default)]
struct Merge {
    pending: [Option<RawFrame>; 2],
    closed: [bool; 2],
    stalled: [bool; 2],
}

impl Merge {
    fn slot(kind: StreamKind) -> usize {
        kind.wire_code() as usize
    }

    fn offer(&mut self, frame: RawFrame) {
        let i = Self::slot(frame.stream_kind);
        self.stalled[i] = false;
        self.pending[i] = Some(frame);
    }

    fn wants(&self, i: usize) -> bool {
        !self.closed[i] && self.pending[i].is_none()
    }

    /// Whether a pending frame is held back only by the other stream.
    fn waiting(&self) -> bool {
        (0..2).any(|i| {
            self.pending[i].is_some()
                && self.pending[1 - i].is_none()
                && !self.closed[1 - i]
                && !self.stalled[1 - i]
        })
    }

    fn stall_empty_streams(&mut self) {
        for i in 0..2 {
            if self.pending[i].is_none() && !self.closed[i] {
                self.stalled[i] = true;
            }
        }
    }

    fn pop(&mut self) -> Option<RawFrame> {
        let i = match (&self.pending[0], &self.pending[1]) {
            (Some(e), Some(g)) => usize::from(g.timestamp_us < e.timestamp_us),
            (Some(_), None) if self.closed[1] || self.stalled[1] => 0,
            (None, Some(_)) if self.closed[0] || self.stalled[0] => 1,
            _ => return None,
        };
        self.pending[i].take()
    }
}

/// Single writer of the session: frames and commands are applied here in
/// arrival order and every record is handed to the fan-out without waiting.
async fn session_loop(
    mut engine: Engine,
    mut streams: Streams,
    mut commands: mpsc::Receiver<CommandRequest>,
    fanout: Fanout,
    mut recorder: Option<BufWriter<File>>,
    mut stop: watch::Receiver<bool>,
) -> Result<SessionPhase, ServeError> {
    let mut merge = Merge::default();
    let (eeg, gaze) = (Merge::slot(StreamKind::Eeg), Merge::slot(StreamKind::Gaze));
    loop {
        tokio::select! {
            biased;
            _ = stopped(&mut stop) => break,
            Some(req) = commands.recv() => {
                let result = engine.apply(req.command).map_err(|e| e.to_string());
                let _ = req.reply.send(result);
            }
            frame = streams.eeg.recv(), if merge.wants(eeg) => match frame {
                Some(f) => merge.offer(f),
                None => {
                    merge.closed[eeg] = true;
                    info!("eeg source ended in phase {}", engine.phase());
                }
            },
            frame = streams.gaze.recv(), if merge.wants(gaze) => match frame {
                Some(f) => merge.offer(f),
                None => merge.closed[gaze] = true,
            },
            _ = tokio::time::sleep(STALL), if merge.waiting() => {
                warn!("a source stalled; continuing without it");
                merge.stall_empty_streams();
            }
        }
        while let Some(frame) = merge.pop() {
            if let Some(w) = recorder.as_mut() {
                record(std::iter::once(&frame), w).map_err(|e| e.source)?;
            }
            match engine.ingest(&frame) {
                Ok(records) => records.iter().for_each(|r| fanout.publish(r)),
                Err(e) => warn!("frame at {} µs rejected: {e}", frame.timestamp_us),
            }
        }
    }
    if let Some(mut w) = recorder {
        w.flush()?;
    }
    Ok(engine.phase())
}

async fn stopped(stop: &mut watch::Receiver<bool>) {
    let _ = stop.wait_for(|s| *s).await;
}

async fn snapshot(State(state): State<AppState>) -> impl IntoResponse {
    (
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        state.fanout.latest().json.to_string(),
    )
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, state))
}

fn error_reply(message: &str) -> Message {
    Message::Text(serde_json::json!({ "error": message }).to_string().into())
}

/// Runs one dashboard connection. Errors end this client only.
async fn client(mut socket: WebSocket, state: AppState) {
    let mut sub = state.fanout.subscribe();
    let mut stop = state.stop.clone();
    loop {
        tokio::select! {
            _ = stopped(&mut stop) => {
                let _ = socket.send(Message::Close(None)).await;
                break;
            }
            item = sub.next() => {
                let Some(item) = item else { break };
                if socket.send(Message::Text(item.json.to_string().into())).await.is_err() {
                    break;
                }
            }
            msg = socket.recv() => {
                let reply = match msg {
                    Some(Ok(Message::Text(text))) => handle_command(&state, text.as_str()).await,
                    Some(Ok(Message::Binary(_))) => Some("commands must be JSON text".to_string()),
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => None,
                };
                if let Some(why) = reply {
                    if socket.send(error_reply(&why)).await.is_err() {
                        break;
                    }
                }
            }
        }
    }
    if sub.dropped() > 0 {
        info!(dropped = sub.dropped(), "client fell behind");
    }
}

/// Parses and queues one command; returns the error to report, if any.
async fn handle_command(state: &AppState, text: &str) -> Option<String> {
    let command = match OperatorCommand::parse(text) {
        Ok(c) => c,
        Err(e) => return Some(e.to_string()),
    };
    let (reply, rx) = oneshot::channel();
    if state
        .commands
        .send(CommandRequest { command, reply })
        .await
        .is_err()
    {
        return Some("session is not running".into());
    }
    match rx.await {
        Ok(Ok(())) => None,
        Ok(Err(e)) => Some(e),
        Err(_) => Some("session is not running".into()),
    }
}
