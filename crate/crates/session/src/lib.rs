//! Live, steerable simulation sessions over a WebSocket.
//!
//! A client connects to `/ws`, creates a session (a model or a built-in
//! scenario preset), subscribes to its frames and drives it with control
//! verbs. See `docs/protocol.md` for the message schema.

pub mod log;
pub mod outbox;
pub mod protocol;
pub mod server;
pub mod session;

pub use log::{LogError, LogRecord, SessionLog};
pub use protocol::{ClientMessage, ServerMessage, PROTOCOL_VERSION};
pub use server::{port_from_env, router, Server, ServerConfig, DEFAULT_PORT, PORT_ENV};
pub use session::{CreateSpec, SessionManager};
