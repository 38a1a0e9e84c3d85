//! Runs a focusloop session as a process: sensor ingestion, the session
//! loop, and WebSocket telemetry for dashboards.
//!
//! Clients connect to `/ws`. The first text message is the current
//! [`TelemetryRecord`](focusloop::TelemetryRecord), followed by one message
//! per published record. Clients send operator commands as JSON text
//! (`{"kind":"set_force","newtons":25}`); a rejected command is answered
//! with `{"error":"..."}` on that connection only.

pub mod fanout;
pub mod server;
pub mod sources;

pub use server::{serve, ServeError, ServeOptions, ServerHandle};
pub use sources::Source;
