mod common;

use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use scenecast_core::clock::ManualClock;
use scenecast_core::orchestrator::{EngineSettings, InteractionKey};
use scenecast_core::services::FixtureProvider;
use scenecast_core::transport::wire::{Hello, Packet, Role};
use scenecast_core::transport::{
    close_code, ClientEvent, ServerConfig, ServerEvent, TestClient, TransportError, TransportServer,
};

const WAIT: Duration = Duration::from_secs(5);

fn server(cfg: ServerConfig) -> (TransportServer, mpsc::Receiver<ServerEvent>) {
    let (tx, rx) = mpsc::channel();
    let s = TransportServer::start(
        ServerConfig {
            bind: "127.0.0.1:0".parse().unwrap(),
            ..cfg
        },
        tx,
    )
    .unwrap();
    (s, rx)
}

fn default_server() -> (TransportServer, mpsc::Receiver<ServerEvent>) {
    server(ServerConfig::default())
}

fn wait_sessions(s: &TransportServer, n: u64) {
    let until = Instant::now() + WAIT;
    while s.session_count() != n {
        assert!(Instant::now() < until, "sessions stuck at {}", s.session_count());
        std::thread::sleep(Duration::from_millis(5));
    }
}

fn next_keypress(rx: &mpsc::Receiver<ServerEvent>) -> Option<InteractionKey> {
    loop {
        match rx.recv_timeout(Duration::from_millis(300)) {
            Ok(ServerEvent::Keypress { key, .. }) => return Some(key),
            Ok(_) => continue,
            Err(_) => return None,
        }
    }
}

fn expect_close(c: &mut TestClient) -> Option<u16> {
    loop {
        match c.recv(WAIT) {
            Ok(ClientEvent::Closed { code, .. }) => return code,
            Ok(ClientEvent::Packet(_)) => continue,
            Err(e) => panic!("expected close, got {e}"),
        }
    }
}

#[test]
fn matching_versions_establish_a_session() {
    let (s, rx) = default_server();
    let (_c, hello) = TestClient::connect_established(&s.url()).unwrap();
    assert_eq!(hello.role, Role::Engine);
    assert_eq!(hello.protocol_major, 1);
    assert!(hello.agent.starts_with("scenecast/"));
    assert_eq!(s.session_count(), 1);
    assert!(matches!(
        rx.recv_timeout(WAIT).unwrap(),
        ServerEvent::Connected { ref agent, .. } if agent == "test-client"
    ));
}

#[test]
fn major_version_mismatch_is_closed() {
    let (s, _rx) = default_server();
    let mut c = TestClient::connect(&s.url()).unwrap();
    match c.handshake(2, 0, WAIT) {
        Err(TransportError::Closed { code, .. }) => assert_eq!(code, Some(close_code::VERSION_MISMATCH)),
        other => panic!("{other:?}"),
    }
    assert_eq!(s.session_count(), 0);
}

#[test]
fn minor_version_difference_is_accepted() {
    let (s, _rx) = default_server();
    let mut c = TestClient::connect(&s.url()).unwrap();
    assert!(c.handshake(1, 7, WAIT).is_ok());
}

#[test]
fn silent_client_times_out() {
    let (s, _rx) = server(ServerConfig {
        handshake_timeout: Duration::from_millis(200),
        ..ServerConfig::default()
    });
    let mut c = TestClient::connect(&s.url()).unwrap();
    let t0 = Instant::now();
    assert_eq!(expect_close(&mut c), Some(close_code::HANDSHAKE_TIMEOUT));
    assert!(t0.elapsed() >= Duration::from_millis(150));
}

#[test]
fn keypress_before_hello_is_a_protocol_error() {
    let (s, rx) = default_server();
    let mut c = TestClient::connect(&s.url()).unwrap();
    c.send(&Packet::Keypress { key: 0 }).unwrap();
    assert_eq!(expect_close(&mut c), Some(close_code::PROTOCOL_ERROR));
    assert_eq!(next_keypress(&rx), None);
}

#[test]
fn garbage_before_hello_is_a_protocol_error() {
    let (s, _rx) = default_server();
    let mut c = TestClient::connect(&s.url()).unwrap();
    c.send_raw(b"not a packet".to_vec()).unwrap();
    assert_eq!(expect_close(&mut c), Some(close_code::PROTOCOL_ERROR));
}

#[test]
fn engine_hello_from_client_is_rejected() {
    let (s, _rx) = default_server();
    let mut c = TestClient::connect(&s.url()).unwrap();
    c.send(&Packet::Hello(Hello {
        role: Role::Engine,
        protocol_major: 1,
        protocol_minor: 0,
        agent: "impostor".into(),
    }))
    .unwrap();
    assert_eq!(expect_close(&mut c), Some(close_code::PROTOCOL_ERROR));
}

#[test]
fn keys_map_and_unknown_keys_are_ignored() {
    let (s, rx) = default_server();
    let (mut c, _) = TestClient::connect_established(&s.url()).unwrap();
    for k in [0u8, 9, 1, 255, 2] {
        c.send(&Packet::Keypress { key: k }).unwrap();
    }
    let got: Vec<InteractionKey> = std::iter::from_fn(|| next_keypress(&rx)).collect();
    assert_eq!(
        got,
        [InteractionKey::ContextCompass, InteractionKey::SceneSweep, InteractionKey::AimAssist]
    );
    // Still connected after the bad keys and a malformed packet.
    c.send_raw(vec![1, 2, 3]).unwrap();
    c.send(&Packet::Ping(vec![7, 7])).unwrap();
    assert_eq!(c.recv_packet(WAIT).unwrap(), Packet::Pong(vec![7, 7]));
}

#[test]
fn broadcasts_reach_every_established_session() {
    let (s, _rx) = default_server();
    let (mut a, _) = TestClient::connect_established(&s.url()).unwrap();
    let (mut b, _) = TestClient::connect_established(&s.url()).unwrap();
    // Not established: must not receive anything but its close.
    let mut pending = TestClient::connect(&s.url()).unwrap();
    wait_sessions(&s, 2);
    for id in 1..=3 {
        s.broadcast(&Packet::CancelBatch { batch_id: id });
    }
    for c in [&mut a, &mut b] {
        for id in 1..=3 {
            assert_eq!(c.recv_packet(WAIT).unwrap(), Packet::CancelBatch { batch_id: id });
        }
    }
    assert!(matches!(pending.recv(Duration::from_millis(200)), Err(TransportError::Timeout)));
}

#[test]
fn disconnect_mid_stream_leaves_server_running() {
    let (s, rx) = default_server();
    let (a, _) = TestClient::connect_established(&s.url()).unwrap();
    let (mut b, _) = TestClient::connect_established(&s.url()).unwrap();
    wait_sessions(&s, 2);
    s.broadcast(&Packet::CancelBatch { batch_id: 1 });
    drop(a);
    for id in 2..50 {
        s.broadcast(&Packet::CancelBatch { batch_id: id });
    }
    for id in 1..50 {
        assert_eq!(b.recv_packet(WAIT).unwrap(), Packet::CancelBatch { batch_id: id });
    }
    wait_sessions(&s, 1);
    assert!(rx.try_iter().any(|e| matches!(e, ServerEvent::Disconnected { .. })));
    let (_c, _) = TestClient::connect_established(&s.url()).unwrap();
}

#[test]
fn wrong_path_is_refused() {
    let (s, _rx) = default_server();
    let url = format!("ws://{}/other", s.local_addr());
    assert!(TestClient::connect(&url).is_err());
}

#[test]
fn engine_batches_arrive_in_emission_order() {
    let (s, _rx) = default_server();
    let s = Arc::new(s);
    let (mut c, _) = TestClient::connect_established(&s.url()).unwrap();
    wait_sessions(&s, 1);
    let r = common::rig_with(
        Arc::new(FixtureProvider::new()),
        Arc::new(ManualClock::new()),
        EngineSettings::default(),
    );
    let engine = scenecast_core::orchestrator::Engine::new(
        r.channels.clone(),
        r.engine.services().clone(),
        s.clone(),
        EngineSettings::default(),
    );
    r.scene(0, vec![common::det("portal", (20.0, 100.0, 120.0, 200.0), 0.9)]);
    let first = engine.dispatch(InteractionKey::SceneSweep).unwrap();
    let second = engine.dispatch(InteractionKey::SceneSweep).unwrap();
    let mut ids = Vec::new();
    for _ in 0..5 {
        match c.recv_packet(WAIT).unwrap() {
            Packet::CueBatch(b) => ids.push(format!("batch {}", b.batch_id)),
            Packet::CancelBatch { batch_id } => ids.push(format!("cancel {batch_id}")),
            p => panic!("{p:?}"),
        }
    }
    assert_eq!(
        ids,
        [
            format!("batch {}", first.ledger.preamble_batch),
            format!("batch {}", first.result.batch_id),
            format!("cancel {}", first.result.batch_id),
            format!("batch {}", second.ledger.preamble_batch),
            format!("batch {}", second.result.batch_id),
        ]
    );
}
