#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use scenecast_core::clock::{ManualClock, SharedClock};
use scenecast_core::orchestrator::{Channels, Engine, EngineSettings, RecordingSink};
use scenecast_core::services::{AiProvider, ServiceError, ServiceKind, ServiceRequest, ServiceResponse, Services};
use scenecast_core::{BBox, Detection, Frame, ObjectClass};

pub const W: u32 = 640;
pub const H: u32 = 640;

pub fn det(class: &str, b: (f64, f64, f64, f64), conf: f32) -> Detection {
    Detection {
        class: ObjectClass::by_name(class).unwrap(),
        bbox: BBox::new(b.0, b.1, b.2, b.3),
        confidence: conf,
    }
}

/// A frame whose pixels depend on position, so crops of different boxes differ.
pub fn frame(seq: u64) -> Frame {
    let mut px = Vec::with_capacity((W * H * 3) as usize);
    for y in 0..H {
        for x in 0..W {
            px.extend_from_slice(&[(x / 3) as u8, (y / 3) as u8, 40]);
        }
    }
    Frame::new(px, W, H, seq * 33_000_000, seq).unwrap()
}

/// Advances a manual clock by a fixed amount on every call of one kind.
pub struct Advancing<P> {
    pub inner: P,
    pub clock: Arc<ManualClock>,
    pub kind: ServiceKind,
    pub by: Duration,
}

impl<P: AiProvider> AiProvider for Advancing<P> {
    fn call(&self, request: &ServiceRequest) -> Result<ServiceResponse, ServiceError> {
        if request.kind == self.kind {
            self.clock.advance(self.by);
        }
        self.inner.call(request)
    }
}

pub struct Rig {
    pub clock: Arc<ManualClock>,
    pub channels: Arc<Channels>,
    pub sink: Arc<RecordingSink>,
    pub engine: Arc<Engine>,
}

pub fn rig_with(provider: Arc<dyn AiProvider>, clock: Arc<ManualClock>, settings: EngineSettings) -> Rig {
    let shared: SharedClock = clock.clone();
    let channels = Arc::new(Channels::new(shared.clone()));
    let services = Arc::new(Services::new(provider, shared.clone()));
    let sink = Arc::new(RecordingSink::new(shared));
    let engine = Arc::new(Engine::new(channels.clone(), services, sink.clone(), settings));
    Rig {
        clock,
        channels,
        sink,
        engine,
    }
}

pub fn rig(provider: impl AiProvider + 'static) -> Rig {
    rig_with(Arc::new(provider), Arc::new(ManualClock::new()), EngineSettings::default())
}

impl Rig {
    /// Publishes a frame and its detections under one seq.
    pub fn scene(&self, seq: u64, dets: Vec<Detection>) -> Frame {
        let f = frame(seq);
        self.channels.push_frame(f.clone());
        self.channels.push_detections(seq, dets);
        f
    }
}
