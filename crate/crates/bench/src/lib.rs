//! Workload builders shared by the criterion benches.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scenecast_core::clock::{SharedClock, SystemClock};
use scenecast_core::eval::EvalRecord;
use scenecast_core::orchestrator::{Channels, Engine, EngineSettings, NullSink};
use scenecast_core::services::{FixtureProvider, Services};
use scenecast_core::testkit::random_detections;
use scenecast_core::{BBox, DepthMap, Detection, Frame, ObjectClass};

pub const SIZE: u32 = 640;

/// Gradient frame at the working resolution.
pub fn scene_frame(seq: u64) -> Frame {
    let mut px = Vec::with_capacity((SIZE * SIZE * 3) as usize);
    for y in 0..SIZE {
        for x in 0..SIZE {
            px.extend_from_slice(&[(x / 3) as u8, (y / 3) as u8, 40]);
        }
    }
    Frame::new(px, SIZE, SIZE, 0, seq).expect("frame size")
}

fn det(name: &str, b: [f64; 4], confidence: f32) -> Detection {
    Detection {
        class: ObjectClass::by_name(name).expect("known class"),
        bbox: BBox::new(b[0], b[1], b[2], b[3]),
        confidence,
    }
}

/// A small mixed scene: text, an avatar, a button and a seat.
pub fn sample_detections() -> Vec<Detection> {
    vec![
        det("sign-text", [280.0, 100.0, 360.0, 160.0], 0.9),
        det("avatar", [40.0, 200.0, 160.0, 560.0], 0.9),
        det("button", [300.0, 420.0, 380.0, 470.0], 0.8),
        det("seat-single", [460.0, 380.0, 600.0, 560.0], 0.7),
    ]
}

/// Engine on the wall clock with fixture services and every channel filled.
pub fn loaded_engine() -> Engine {
    let clock: SharedClock = Arc::new(SystemClock::new());
    let channels = Arc::new(Channels::new(clock.clone()));
    let services = Arc::new(Services::new(Arc::new(FixtureProvider::new()), clock));
    let engine = Engine::new(channels.clone(), services, Arc::new(NullSink), EngineSettings::default());
    channels.push_frame(scene_frame(0));
    channels.push_detections(0, sample_detections());
    channels.push_depth(0, DepthMap::constant(SIZE, SIZE, 0.5).expect("depth size"));
    engine
}

/// Random ground truth with jittered, partly wrong predictions.
pub fn eval_records(seed: u64, images: usize) -> Vec<EvalRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..images)
        .map(|i| {
            let n = rng.gen_range(1..12);
            let gt = random_detections(&mut rng, n, SIZE, SIZE);
            let mut predictions = Vec::new();
            for d in &gt {
                if !rng.gen_bool(0.8) {
                    continue;
                }
                let j = rng.gen_range(-8.0..8.0);
                let b = d.bbox;
                predictions.push(Detection {
                    bbox: BBox::new((b.x_min + j).max(0.0), b.y_min, b.x_max + j, b.y_max),
                    confidence: rng.gen_range(0.05..1.0),
                    ..*d
                });
            }
            EvalRecord {
                image_id: format!("img{i:05}"),
                ground_truth: gt.iter().map(|d| (d.class, d.bbox)).collect(),
                predictions,
            }
        })
        .collect()
}
