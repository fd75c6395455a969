//! Blocking websocket client for tests and tooling.

use std::net::TcpStream;
use std::time::{Duration, Instant};

use tokio_tungstenite::tungstenite::stream::MaybeTlsStream;
use tokio_tungstenite::tungstenite::{self, Message, WebSocket};

use super::server::PROTOCOL_MINOR;
use super::wire::{Hello, Packet, Role, VERSION};
use super::TransportError;

#[derive(Debug, Clone, PartialEq)]
pub enum ClientEvent {
    Packet(Packet),
    Closed { code: Option<u16>, reason: String },
}

pub struct TestClient {
    ws: WebSocket<MaybeTlsStream<TcpStream>>,
}

impl TestClient {
    /// Opens the websocket without sending `Hello`.
    pub fn connect(url: &str) -> Result<Self, TransportError> {
        let (ws, _) = tungstenite::connect(url).map_err(ws_err)?;
        if let MaybeTlsStream::Plain(s) = ws.get_ref() {
            let _ = s.set_nodelay(true);
        }
        Ok(Self { ws })
    }

    /// Connects and completes the handshake at the engine's protocol version.
    pub fn connect_established(url: &str) -> Result<(Self, Hello), TransportError> {
        let mut c = Self::connect(url)?;
        let hello = c.handshake(VERSION, PROTOCOL_MINOR, Duration::from_secs(5))?;
        Ok((c, hello))
    }

    pub fn send(&mut self, packet: &Packet) -> Result<(), TransportError> {
        self.send_raw(packet.encode())
    }

    pub fn send_raw(&mut self, bytes: Vec<u8>) -> Result<(), TransportError> {
        self.ws.send(Message::Binary(bytes)).map_err(ws_err)
    }

    /// Sends a client `Hello` and waits for the engine's.
    pub fn handshake(
        &mut self,
        major: u8,
        minor: u8,
        timeout: Duration,
    ) -> Result<Hello, TransportError> {
        self.send(&Packet::Hello(Hello {
            role: Role::Client,
            protocol_major: major,
            protocol_minor: minor,
            agent: "test-client".into(),
        }))?;
        match self.recv(timeout)? {
            ClientEvent::Packet(Packet::Hello(h)) if h.role == Role::Engine => Ok(h),
            ClientEvent::Packet(p) => Err(TransportError::Unexpected(format!(
                "expected engine hello, got {:?}",
                p.kind()
            ))),
            ClientEvent::Closed { code, reason } => Err(TransportError::Closed { code, reason }),
        }
    }

    /// Next packet or close notice; `Timeout` if neither arrives in time.
    pub fn recv(&mut self, timeout: Duration) -> Result<ClientEvent, TransportError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(TransportError::Timeout);
            }
            if let MaybeTlsStream::Plain(s) = self.ws.get_ref() {
                s.set_read_timeout(Some(left))?;
            }
            match self.ws.read() {
                Ok(Message::Binary(b)) => return Ok(ClientEvent::Packet(Packet::decode(&b)?)),
                Ok(Message::Close(frame)) => {
                    return Ok(ClientEvent::Closed {
                        code: frame.as_ref().map(|f| u16::from(f.code)),
                        reason: frame.map(|f| f.reason.into_owned()).unwrap_or_default(),
                    })
                }
                Ok(_) => continue,
                Err(tungstenite::Error::Io(e))
                    if matches!(
                        e.kind(),
                        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                    ) =>
                {
                    return Err(TransportError::Timeout)
                }
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                    return Ok(ClientEvent::Closed {
                        code: None,
                        reason: "connection closed".into(),
                    })
                }
                Err(e) => return Err(ws_err(e)),
            }
        }
    }

    /// Waits for the next packet, skipping nothing; close notices become errors.
    pub fn recv_packet(&mut self, timeout: Duration) -> Result<Packet, TransportError> {
        match self.recv(timeout)? {
            ClientEvent::Packet(p) => Ok(p),
            ClientEvent::Closed { code, reason } => Err(TransportError::Closed { code, reason }),
        }
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
    }
}

fn ws_err(e: tungstenite::Error) -> TransportError {
    TransportError::WebSocket(e.to_string())
}
