//! Engine-side websocket server.
//!
//! The server runs its own tokio runtime on a background thread. Outgoing
//! packets are broadcast to every established session; keypresses arrive on a
//! std channel so the synchronous coordinator can block on them.
//!
//! Session rules:
//!
//! - the first message must be a client `Hello` within the handshake timeout;
//! - a different protocol major closes with 4001, a timeout with 4002, any
//!   other first packet (a keypress included) with 4003;
//! - after the handshake, malformed packets are logged and skipped.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, oneshot};
use tokio_tungstenite::tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tokio_tungstenite::tungstenite::http::StatusCode;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::protocol::CloseFrame;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::WebSocketStream;

use crate::orchestrator::InteractionKey;

use super::close_code;
use super::wire::{Hello, Packet, Role, VERSION};
use super::TransportError;

pub const DEFAULT_PORT: u16 = 8765;
pub const ENDPOINT_PATH: &str = "/vrsight/v1";
pub const PROTOCOL_MINOR: u8 = 0;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub handshake_timeout: Duration,
    /// Packets buffered per slow session before it starts missing some.
    pub queue_depth: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            handshake_timeout: Duration::from_secs(5),
            queue_depth: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerEvent {
    Connected { session: u64, agent: String },
    Keypress { session: u64, key: InteractionKey },
    Disconnected { session: u64 },
}

pub struct TransportServer {
    local_addr: SocketAddr,
    outgoing: broadcast::Sender<Arc<Vec<u8>>>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
    sessions: Arc<AtomicU64>,
}

impl TransportServer {
    /// Binds and starts serving. Keypresses and session changes go to `events`.
    pub fn start(
        config: ServerConfig,
        events: mpsc::Sender<ServerEvent>,
    ) -> Result<Self, TransportError> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .thread_name("transport")
            .enable_all()
            .build()?;
        let listener = runtime.block_on(TcpListener::bind(config.bind))?;
        let local_addr = listener.local_addr()?;
        let (outgoing, _) = broadcast::channel(config.queue_depth.max(1));
        let (shutdown, shutdown_rx) = oneshot::channel();
        let sessions = Arc::new(AtomicU64::new(0));

        let tx = outgoing.clone();
        let live = sessions.clone();
        let thread = std::thread::Builder::new()
            .name("transport-server".into())
            .spawn(move || {
                runtime.block_on(accept_loop(listener, config, tx, events, live, shutdown_rx));
                runtime.shutdown_timeout(Duration::from_millis(500));
            })?;
        log::info!("transport listening on ws://{local_addr}{ENDPOINT_PATH}");
        Ok(Self {
            local_addr,
            outgoing,
            shutdown: Some(shutdown),
            thread: Some(thread),
            sessions,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}{}", self.local_addr, ENDPOINT_PATH)
    }

    /// Number of sessions past the handshake.
    pub fn session_count(&self) -> u64 {
        self.sessions.load(Ordering::SeqCst)
    }

    /// Encodes once and queues to every established session.
    pub fn broadcast(&self, packet: &Packet) {
        // No receivers is not an error: nobody is listening yet.
        let _ = self.outgoing.send(Arc::new(packet.encode()));
    }

    pub fn shutdown(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for TransportServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

async fn accept_loop(
    listener: TcpListener,
    config: ServerConfig,
    outgoing: broadcast::Sender<Arc<Vec<u8>>>,
    events: mpsc::Sender<ServerEvent>,
    sessions: Arc<AtomicU64>,
    mut shutdown: oneshot::Receiver<()>,
) {
    let next_id = AtomicU64::new(1);
    loop {
        tokio::select! {
            _ = &mut shutdown => break,
            accepted = listener.accept() => {
                let (stream, peer) = match accepted {
                    Ok(v) => v,
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        continue;
                    }
                };
                let id = next_id.fetch_add(1, Ordering::Relaxed);
                let tx = outgoing.clone();
                let events = events.clone();
                let sessions = sessions.clone();
                let timeout = config.handshake_timeout;
                tokio::spawn(async move {
                    if let Err(e) = serve_session(id, stream, timeout, tx, events, sessions).await {
                        log::info!("session {id} ({peer}) ended: {e}");
                    }
                });
            }
        }
    }
}

fn check_path(req: &Request, resp: Response) -> Result<Response, ErrorResponse> {
    if req.uri().path() == ENDPOINT_PATH {
        Ok(resp)
    } else {
        let mut err = ErrorResponse::new(Some(format!("no endpoint at {}", req.uri().path())));
        *err.status_mut() = StatusCode::NOT_FOUND;
        Err(err)
    }
}

async fn close(ws: &mut WebSocketStream<TcpStream>, code: u16, reason: &str) {
    let frame = CloseFrame {
        code: CloseCode::from(code),
        reason: reason.to_string().into(),
    };
    let _ = ws.send(Message::Close(Some(frame))).await;
    let _ = ws.flush().await;
}

async fn serve_session(
    id: u64,
    stream: TcpStream,
    handshake_timeout: Duration,
    outgoing: broadcast::Sender<Arc<Vec<u8>>>,
    events: mpsc::Sender<ServerEvent>,
    sessions: Arc<AtomicU64>,
) -> Result<(), TransportError> {
    let _ = stream.set_nodelay(true);
    let mut ws = tokio_tungstenite::accept_hdr_async(stream, check_path)
        .await
        .map_err(|e| TransportError::WebSocket(e.to_string()))?;

    let hello = match tokio::time::timeout(handshake_timeout, first_packet(&mut ws)).await {
        Err(_) => {
            close(&mut ws, close_code::HANDSHAKE_TIMEOUT, "no hello").await;
            return Err(TransportError::Timeout);
        }
        Ok(Err(e)) => {
            close(&mut ws, close_code::PROTOCOL_ERROR, &e.to_string()).await;
            return Err(e);
        }
        Ok(Ok(Packet::Hello(h))) if h.role == Role::Client => h,
        Ok(Ok(other)) => {
            let why = format!("expected client hello, got {:?}", other.kind());
            close(&mut ws, close_code::PROTOCOL_ERROR, &why).await;
            return Err(TransportError::Unexpected(why));
        }
    };
    if hello.protocol_major != VERSION {
        let why = format!(
            "protocol {}.{} unsupported, engine speaks {VERSION}.{PROTOCOL_MINOR}",
            hello.protocol_major, hello.protocol_minor
        );
        close(&mut ws, close_code::VERSION_MISMATCH, &why).await;
        return Err(TransportError::Unexpected(why));
    }
    // Subscribe before replying so a client holding the reply never misses
    // a broadcast.
    let mut outgoing = outgoing.subscribe();
    sessions.fetch_add(1, Ordering::SeqCst);
    let reply = Packet::Hello(Hello {
        role: Role::Engine,
        protocol_major: VERSION,
        protocol_minor: PROTOCOL_MINOR,
        agent: format!("scenecast/{}", env!("CARGO_PKG_VERSION")),
    });
    if let Err(e) = ws.send(Message::Binary(reply.encode())).await {
        sessions.fetch_sub(1, Ordering::SeqCst);
        return Err(TransportError::WebSocket(e.to_string()));
    }
    let _ = events.send(ServerEvent::Connected {
        session: id,
        agent: hello.agent.clone(),
    });
    let result = established(id, &mut ws, &mut outgoing, &events).await;
    sessions.fetch_sub(1, Ordering::SeqCst);
    let _ = events.send(ServerEvent::Disconnected { session: id });
    result
}

async fn first_packet(ws: &mut WebSocketStream<TcpStream>) -> Result<Packet, TransportError> {
    while let Some(msg) = ws.next().await {
        match msg.map_err(|e| TransportError::WebSocket(e.to_string()))? {
            Message::Binary(b) => return Ok(Packet::decode(&b)?),
            Message::Close(_) => break,
            Message::Text(_) => {
                return Err(TransportError::Unexpected("text frame".into()));
            }
            _ => {}
        }
    }
    Err(TransportError::Closed {
        code: None,
        reason: "closed before hello".into(),
    })
}

async fn established(
    id: u64,
    ws: &mut WebSocketStream<TcpStream>,
    outgoing: &mut broadcast::Receiver<Arc<Vec<u8>>>,
    events: &mpsc::Sender<ServerEvent>,
) -> Result<(), TransportError> {
    let ws_err = |e: tokio_tungstenite::tungstenite::Error| TransportError::WebSocket(e.to_string());
    loop {
        tokio::select! {
            out = outgoing.recv() => match out {
                Ok(bytes) => ws.send(Message::Binary(bytes.as_ref().clone())).await.map_err(ws_err)?,
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("session {id} fell behind and missed {n} packets");
                }
                Err(broadcast::error::RecvError::Closed) => {
                    close(ws, 1001, "engine shutting down").await;
                    return Ok(());
                }
            },
            incoming = ws.next() => {
                let Some(msg) = incoming else { return Ok(()) };
                match msg.map_err(ws_err)? {
                    Message::Binary(b) => match Packet::decode(&b) {
                        Ok(Packet::Keypress { key }) => match InteractionKey::from_wire(key) {
                            Some(k) => {
                                let _ = events.send(ServerEvent::Keypress { session: id, key: k });
                            }
                            None => log::info!("session {id}: ignoring unknown key {key}"),
                        },
                        Ok(Packet::Ping(body)) => {
                            ws.send(Message::Binary(Packet::Pong(body).encode())).await.map_err(ws_err)?;
                        }
                        Ok(other) => log::info!("session {id}: ignoring {:?} packet", other.kind()),
                        Err(e) => log::warn!("session {id}: dropping malformed packet: {e}"),
                    },
                    Message::Close(_) => return Ok(()),
                    _ => {}
                }
            }
        }
    }
}
