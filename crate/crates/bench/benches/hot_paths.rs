use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scenecast_bench::{eval_records, loaded_engine, sample_detections, scene_frame};
use scenecast_core::eval::{augment, map_summary, AugmentationSpec};
use scenecast_core::orchestrator::InteractionKey;
use scenecast_core::perception::{detect_pointer, PointerColorProfile};
use scenecast_core::spatial::{order_sweep, schedule_sweep, to_spatial, SpatialConfig};
use scenecast_core::testkit::{random_detections, render_segment, SegmentSpec};
use scenecast_core::transport::wire::{CueBatchBody, Packet, PayloadKind, WireCue};
use scenecast_core::{CuePayload, SceneTone, SpatialCue};

fn dispatch(c: &mut Criterion) {
    let engine = loaded_engine();
    let mut g = c.benchmark_group("dispatch");
    for key in InteractionKey::ALL {
        g.bench_function(key.name(), |b| b.iter(|| engine.dispatch(black_box(key)).unwrap()));
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let records = eval_records(1, 500);
    c.bench_function("map_summary/500 images", |b| b.iter(|| map_summary(black_box(&records))));
}

fn pointer(c: &mut Criterion) {
    let frame = render_segment(&SegmentSpec {
        size: 640,
        start: (320.0, 620.0),
        end: (420.0, 200.0),
        width: 4.0,
        color: [40, 220, 60],
        noise: 6,
        seed: 3,
    });
    let green = PointerColorProfile::green();
    c.bench_function("pointer/detect 640", |b| b.iter(|| detect_pointer(black_box(&frame), &green)));
}

fn sweep(c: &mut Criterion) {
    let cfg = SpatialConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dets = random_detections(&mut rng, 30, 640, 640);
    c.bench_function("sweep/order+schedule 30", |b| {
        b.iter(|| {
            let order = order_sweep(black_box(&dets));
            schedule_sweep(
                order.iter().map(|e| {
                    let g = to_spatial(&e.detection.bbox, 0.5, 640, &cfg);
                    let cue = SpatialCue::new(
                        g.azimuth,
                        g.gain,
                        g.distance,
                        CuePayload::Speech(e.detection.class.name.into()),
                        SceneTone::Neutral,
                        e.order_index,
                    )
                    .unwrap();
                    (cue, 400)
                }),
                &cfg,
            )
        })
    });
}

fn wire(c: &mut Criterion) {
    let packet = Packet::CueBatch(CueBatchBody {
        batch_id: 7,
        tone: 1,
        cues: (0..8u16)
            .map(|i| WireCue {
                order_index: i + 1,
                start_ms: u32::from(i) * 750,
                azimuth: -0.8 + 0.2 * f32::from(i),
                gain: 0.7,
                distance: 0.4,
                payload_kind: PayloadKind::SpeechPcm,
                payload: vec![0; 16_000],
            })
            .collect(),
    });
    let bytes = packet.encode();
    let mut g = c.benchmark_group("wire");
    g.bench_function("encode 8 cues", |b| b.iter(|| black_box(&packet).encode()));
    g.bench_function("decode 8 cues", |b| b.iter(|| Packet::decode(black_box(&bytes)).unwrap()));
    g.finish();
}

fn augmentation(c: &mut Criterion) {
    let frame = scene_frame(0);
    let boxes: Vec<_> = sample_detections().iter().map(|d| (d.class, d.bbox)).collect();
    let spec = AugmentationSpec::default();
    let mut i = 0u64;
    c.bench_function("augment/640 frame", |b| {
        b.iter_batched(
            || {
                i += 1;
                spec.draws_for(i)[0]
            },
            |p| augment(&frame, &boxes, &p),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, dispatch, metrics, pointer, sweep, wire, augmentation);
criterion_main!(benches);
