//! Websocket transport: cue batches downstream, keypresses upstream.

pub mod client;
pub mod server;
pub mod wire;

pub use client::{ClientEvent, TestClient};
pub use server::{ServerConfig, ServerEvent, TransportServer, DEFAULT_PORT, ENDPOINT_PATH};
pub use wire::{CueBatchBody, Hello, Packet, PacketKind, PayloadKind, Role, WireCue, WireError};

use thiserror::Error;

/// Close codes sent by the engine.
pub mod close_code {
    pub const VERSION_MISMATCH: u16 = 4001;
    pub const HANDSHAKE_TIMEOUT: u16 = 4002;
    pub const PROTOCOL_ERROR: u16 = 4003;
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("websocket: {0}")]
    WebSocket(String),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("timed out")]
    Timeout,
    #[error("connection closed (code {code:?}): {reason}")]
    Closed { code: Option<u16>, reason: String },
    #[error("unexpected: {0}")]
    Unexpected(String),
}
