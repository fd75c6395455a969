//! Perception stages feeding the channels.
//!
//! [`SyncPipeline`] runs every stage in line on the caller's thread, which is
//! what replay and benchmarks want. [`Pipeline`] runs one worker thread per
//! stage, each fed through its own single-slot frame cell so a slow stage
//! skips frames instead of queueing them.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

use crate::perception::{DepthBackend, DetectorBackend, PointerDetector};
use crate::scene::Frame;
use crate::services::LatencyStats;

use super::{Engine, ToneConfig, ToneTracker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Detect,
    Edge,
    Depth,
    Tone,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Detect, Stage::Edge, Stage::Depth, Stage::Tone];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Detect => "detect",
            Stage::Edge => "edge",
            Stage::Depth => "depth",
            Stage::Tone => "tone",
        }
    }
}

/// Wall-clock stage timings, shared between workers and readers.
#[derive(Default)]
pub struct StageStats(Mutex<HashMap<Stage, LatencyStats>>);

impl StageStats {
    pub fn record(&self, stage: Stage, d: Duration) {
        self.0.lock().entry(stage).or_default().record(d);
    }

    pub fn snapshot(&self) -> HashMap<Stage, LatencyStats> {
        self.0.lock().clone()
    }
}

fn timed<R>(stats: &StageStats, stage: Stage, f: impl FnOnce() -> R) -> R {
    let t0 = Instant::now();
    let r = f();
    stats.record(stage, t0.elapsed());
    r
}

pub struct Backends {
    pub detector: Box<dyn DetectorBackend>,
    /// Absent means every object sits at the fallback depth.
    pub depth: Option<Box<dyn DepthBackend>>,
    pub pointer: Option<PointerDetector>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PipelineConfig {
    pub tone: ToneConfig,
    /// Skip tone classification entirely (tone stays at its default).
    pub disable_tone: bool,
}

fn detect_stage(engine: &Engine, detector: &mut dyn DetectorBackend, frame: &Frame, stats: &StageStats) {
    let out = timed(stats, Stage::Detect, || detector.detect(frame));
    match out {
        Ok(dets) => {
            engine.channels().push_detections(frame.seq(), dets);
            if let Ok(s) = engine.channels().snapshot() {
                engine.safeguard_tick(&s);
            }
        }
        Err(e) => log::warn!("detector failed on seq {}: {e}", frame.seq()),
    }
}

fn depth_stage(engine: &Engine, depth: &mut dyn DepthBackend, frame: &Frame, stats: &StageStats) {
    match timed(stats, Stage::Depth, || depth.estimate_depth(frame)) {
        Ok(dm) if dm.dimensions() == frame.dimensions() => {
            engine.channels().push_depth(frame.seq(), dm);
        }
        Ok(dm) => log::warn!(
            "depth map {:?} does not match frame {:?}; dropped",
            dm.dimensions(),
            frame.dimensions()
        ),
        Err(e) => log::warn!("depth backend failed on seq {}: {e}", frame.seq()),
    }
}

fn edge_stage(engine: &Engine, pointer: &PointerDetector, frame: &Frame, stats: &StageStats) {
    let ray = timed(stats, Stage::Edge, || pointer.detect(frame));
    engine.channels().push_pointer(frame.seq(), ray);
}

fn tone_stage(engine: &Engine, tracker: &mut ToneTracker, frame: &Frame, stats: &StageStats) {
    let now = engine.channels().clock().now();
    let tone = timed(stats, Stage::Tone, || {
        engine
            .pool()
            .run(|| tracker.observe(frame, now, engine.services()))
    });
    engine.channels().push_tone(frame.seq(), tone);
}

/// Runs all stages in line for each submitted frame.
pub struct SyncPipeline {
    engine: Arc<Engine>,
    backends: Backends,
    tone: Option<ToneTracker>,
    stats: StageStats,
}

impl SyncPipeline {
    pub fn new(engine: Arc<Engine>, backends: Backends, cfg: PipelineConfig) -> Self {
        Self {
            engine,
            backends,
            tone: (!cfg.disable_tone).then(|| ToneTracker::new(cfg.tone)),
            stats: StageStats::default(),
        }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    /// Tone, pointer, depth, then detections (which also ticks SafeGuard).
    pub fn process(&mut self, frame: Frame) {
        let engine = &*self.engine;
        engine.channels().push_frame(frame.clone());
        if let Some(t) = &mut self.tone {
            tone_stage(engine, t, &frame, &self.stats);
        }
        if let Some(p) = &self.backends.pointer {
            edge_stage(engine, p, &frame, &self.stats);
        }
        if let Some(d) = &mut self.backends.depth {
            depth_stage(engine, d.as_mut(), &frame, &self.stats);
        }
        detect_stage(engine, self.backends.detector.as_mut(), &frame, &self.stats);
    }

    pub fn stage_stats(&self) -> HashMap<Stage, LatencyStats> {
        self.stats.snapshot()
    }
}

/// Single-slot frame hand-off to one worker.
struct Cell {
    slot: Mutex<Option<Frame>>,
    ready: Condvar,
}

impl Cell {
    fn new() -> Arc<Self> {
        Arc::new(Self {
            slot: Mutex::new(None),
            ready: Condvar::new(),
        })
    }

    /// Replaces any frame the worker has not picked up yet.
    fn put(&self, frame: Frame) -> bool {
        let replaced = self.slot.lock().replace(frame).is_some();
        self.ready.notify_one();
        replaced
    }

    fn take(&self, stop: &AtomicBool) -> Option<Frame> {
        let mut slot = self.slot.lock();
        loop {
            if stop.load(Ordering::SeqCst) {
                return None;
            }
            if let Some(f) = slot.take() {
                return Some(f);
            }
            self.ready.wait_for(&mut slot, Duration::from_millis(50));
        }
    }
}

/// Threaded pipeline: one worker per stage.
pub struct Pipeline {
    engine: Arc<Engine>,
    cells: Vec<Arc<Cell>>,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
    stats: Arc<StageStats>,
    dropped: Arc<std::sync::atomic::AtomicU64>,
}

impl Pipeline {
    pub fn start(engine: Arc<Engine>, backends: Backends, cfg: PipelineConfig) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(StageStats::default());
        let mut cells = Vec::new();
        let mut workers = Vec::new();

        let mut spawn = |name: &str, mut work: Box<dyn FnMut(&Engine, &Frame, &StageStats) + Send>| {
            let cell = Cell::new();
            cells.push(cell.clone());
            let (engine, stop, stats) = (engine.clone(), stop.clone(), stats.clone());
            let handle = std::thread::Builder::new()
                .name(format!("stage-{name}"))
                .spawn(move || {
                    while let Some(frame) = cell.take(&stop) {
                        work(&engine, &frame, &stats);
                    }
                })
                .expect("spawn pipeline worker");
            workers.push(handle);
        };

        let Backends {
            mut detector,
            depth,
            pointer,
        } = backends;
        spawn(
            "detect",
            Box::new(move |e, f, s| detect_stage(e, detector.as_mut(), f, s)),
        );
        if let Some(mut d) = depth {
            spawn("depth", Box::new(move |e, f, s| depth_stage(e, d.as_mut(), f, s)));
        }
        if let Some(p) = pointer {
            spawn("edge", Box::new(move |e, f, s| edge_stage(e, &p, f, s)));
        }
        if !cfg.disable_tone {
            let mut tracker = ToneTracker::new(cfg.tone);
            spawn("tone", Box::new(move |e, f, s| tone_stage(e, &mut tracker, f, s)));
        }

        Self {
            engine,
            cells,
            stop,
            workers,
            stats,
            dropped: Arc::new(std::sync::atomic::AtomicU64::new(0)),
        }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    /// Publishes the frame and hands it to every worker, replacing frames
    /// they have not started on.
    pub fn submit(&self, frame: Frame) {
        self.engine.channels().push_frame(frame.clone());
        for c in &self.cells {
            if c.put(frame.clone()) {
                self.dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
    }

    /// Frames replaced before a worker reached them, summed over workers.
    pub fn dropped_frames(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub fn stage_stats(&self) -> HashMap<Stage, LatencyStats> {
        self.stats.snapshot()
    }

    /// Signals every worker and waits up to `deadline`. Returns false if some
    /// worker was still busy (it is left detached).
    pub fn shutdown(mut self, deadline: Duration) -> bool {
        self.stop.store(true, Ordering::SeqCst);
        for c in &self.cells {
            c.ready.notify_all();
        }
        let until = Instant::now() + deadline;
        while Instant::now() < until && self.workers.iter().any(|w| !w.is_finished()) {
            std::thread::sleep(Duration::from_millis(5));
        }
        let clean = self.workers.iter().all(|w| w.is_finished());
        for w in self.workers.drain(..) {
            if w.is_finished() {
                let _ = w.join();
            }
        }
        clean
    }
}

impl Drop for Pipeline {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for c in &self.cells {
            c.ready.notify_all();
        }
    }
}
