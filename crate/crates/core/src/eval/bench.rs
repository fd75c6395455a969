//! Per-stage latency benchmark over a replayed frame sequence.

use std::fmt::Write as _;
use std::time::Duration;

use crate::orchestrator::{InteractionKey, LatencyLedger, Stage, SyncPipeline};
use crate::scene::Frame;
use crate::services::ServiceKind;

#[derive(Debug, Clone)]
pub struct Workload {
    /// Cycled in order to fill the run.
    pub frames: Vec<Frame>,
    pub fps: u32,
    pub duration: Duration,
    /// A keypress every this many frames, rotating through all three keys.
    pub key_every: u32,
}

impl Workload {
    pub fn new(frames: Vec<Frame>) -> Self {
        Self {
            frames,
            fps: 30,
            duration: Duration::from_secs(60),
            key_every: 30,
        }
    }

    /// Frames processed: `fps * duration`, or none without frames.
    pub fn frame_count(&self) -> u64 {
        if self.frames.is_empty() {
            return 0;
        }
        (self.duration.as_secs_f64() * f64::from(self.fps)).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRow {
    pub stage: &'static str,
    pub count: usize,
    pub mean: Duration,
    pub p50: Duration,
    pub p95: Duration,
    pub p99: Duration,
    pub max: Duration,
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[Duration], p: f64) -> Duration {
    if sorted.is_empty() {
        return Duration::ZERO;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl StageRow {
    /// `None` for an empty sample set.
    pub fn from_samples(stage: &'static str, samples: &[Duration]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_unstable();
        let total: Duration = s.iter().sum();
        Some(Self {
            stage,
            count: s.len(),
            mean: total / s.len() as u32,
            p50: percentile(&s, 50.0),
            p95: percentile(&s, 95.0),
            p99: percentile(&s, 99.0),
            max: *s.last().expect("non-empty"),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizedRow {
    pub key: InteractionKey,
    pub count: usize,
    pub mean_ms: f64,
    pub max_ms: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub frames: u64,
    pub dispatches: usize,
    pub stages: Vec<StageRow>,
    pub realized: Vec<RealizedRow>,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl BenchReport {
    pub fn stage(&self, name: &str) -> Option<&StageRow> {
        self.stages.iter().find(|r| r.stage == name)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# frames={} dispatches={}", self.frames, self.dispatches);
        out.push_str("stage\tcount\tmean_ms\tp50_ms\tp95_ms\tp99_ms\tmax_ms\n");
        for r in &self.stages {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}",
                r.stage,
                r.count,
                ms(r.mean),
                ms(r.p50),
                ms(r.p95),
                ms(r.p99),
                ms(r.max)
            );
        }
        out.push_str("\ninteraction\tcount\trealized_mean_ms\trealized_max_ms\n");
        for r in &self.realized {
            let _ = writeln!(out, "{}\t{}\t{:.1}\t{}", r.key.name(), r.count, r.mean_ms, r.max_ms);
        }
        out
    }
}

/// Feeds the workload through the pipeline, pressing keys on schedule, and
/// summarizes every stage. Provider rows cover calls made during the run
/// only; the "gpt" row pools icon, scene and tone requests.
pub fn run_bench(pipeline: &mut SyncPipeline, workload: &Workload) -> BenchReport {
    let n = workload.frame_count();
    if n == 0 {
        return BenchReport::default();
    }
    let before = pipeline.engine().services().stats();
    let mut ledgers: Vec<LatencyLedger> = Vec::new();
    let every = u64::from(workload.key_every.max(1));
    for i in 0..n {
        let src = &workload.frames[(i % workload.frames.len() as u64) as usize];
        let ts = (i as f64 * 1e9 / f64::from(workload.fps.max(1))) as u64;
        pipeline.process(src.restamped(ts, i));
        if (i + 1) % every == 0 {
            let key = InteractionKey::ALL[((i + 1) / every - 1) as usize % 3];
            match pipeline.engine().dispatch(key) {
                Ok(r) => ledgers.push(r.ledger),
                Err(e) => log::warn!("bench dispatch failed: {e}"),
            }
        }
    }
    let after = pipeline.engine().services().stats();
    let new_samples = |kinds: &[ServiceKind]| -> Vec<Duration> {
        kinds
            .iter()
            .flat_map(|k| {
                let seen = before.get(k).map_or(0, |s| s.count) as usize;
                let s = after.get(k).map(|s| s.samples().to_vec()).unwrap_or_default();
                // The window is a ring; once it wraps older samples are mixed in.
                s.into_iter().skip(seen.min(4096))
            })
            .collect()
    };

    let stage_stats = pipeline.stage_stats();
    let mut stages = Vec::new();
    for (stage, name) in [(Stage::Detect, "detect"), (Stage::Edge, "edge"), (Stage::Depth, "depth")] {
        if let Some(s) = stage_stats.get(&stage) {
            stages.extend(StageRow::from_samples(name, s.samples()));
        }
    }
    stages.extend(StageRow::from_samples(
        "gpt",
        &new_samples(&[ServiceKind::IconDescribe, ServiceKind::SceneDescribe, ServiceKind::ToneClassify]),
    ));
    stages.extend(StageRow::from_samples("ocr", &new_samples(&[ServiceKind::Ocr])));
    stages.extend(StageRow::from_samples("tts", &new_samples(&[ServiceKind::Synthesize])));
    let dispatch: Vec<Duration> = ledgers.iter().map(|l| l.to_preamble).collect();
    stages.extend(StageRow::from_samples("dispatch", &dispatch));

    let realized = InteractionKey::ALL
        .iter()
        .filter_map(|k| {
            let r: Vec<u32> = ledgers.iter().filter(|l| l.key == *k).map(|l| l.realized_ms()).collect();
            (!r.is_empty()).then(|| RealizedRow {
                key: *k,
                count: r.len(),
                mean_ms: r.iter().map(|v| f64::from(*v)).sum::<f64>() / r.len() as f64,
                max_ms: r.iter().copied().max().unwrap_or(0),
            })
        })
        .collect();

    BenchReport {
        frames: n,
        dispatches: ledgers.len(),
        stages,
        realized,
    }
}
