//! Deterministic replay over an image sequence, producing a cue transcript.
//!
//! The run uses a manual clock stepped to each frame's timestamp, so the
//! transcript depends only on the frames, the annotation script, the
//! recorded responses and the press schedule.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Duration;

use scenecast_core::clock::{Clock, ManualClock};
use scenecast_core::orchestrator::{
    Backends, InteractionKey, PipelineConfig, RecordingSink, SinkEvent, SyncPipeline,
};
use scenecast_core::services::AiProvider;
use scenecast_core::{CuePayload, Frame};

use crate::config::EngineConfig;
use crate::{wiring, CliError};

/// Gap between presses scheduled after the last frame, long enough for a
/// sweep to finish playing.
pub const SETTLE: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Press {
    /// Pressed right after this frame is processed. `None` means after the
    /// run, spaced by [`SETTLE`].
    pub after_seq: Option<u64>,
    pub key: InteractionKey,
}

impl Press {
    /// `SEQ:KEY` with KEY one of `cc`, `ss`, `aa`; `end:KEY` presses after
    /// the last frame.
    pub fn parse(s: &str) -> Result<Self, String> {
        let (seq, key) = s.split_once(':').ok_or_else(|| format!("expected SEQ:KEY, got {s:?}"))?;
        let key = InteractionKey::parse_command(key).ok_or_else(|| format!("unknown key {key:?}"))?;
        let after_seq = if seq == "end" {
            None
        } else {
            Some(seq.parse().map_err(|_| format!("bad frame number {seq:?}"))?)
        };
        Ok(Self { after_seq, key })
    }

    pub fn default_schedule() -> Vec<Press> {
        InteractionKey::ALL
            .iter()
            .map(|&key| Press { after_seq: None, key })
            .collect()
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

/// One row per cue at its scheduled time, plus one per cancellation.
pub fn transcript(events: &[SinkEvent]) -> String {
    let mut rows: Vec<(u64, String)> = Vec::new();
    for e in events {
        let at = e.at().as_millis() as u64;
        match e {
            SinkEvent::Batch { batch, .. } => {
                for c in &batch.cues {
                    let payload = match &c.cue.payload {
                        CuePayload::Speech(t) => format!("batch={} speech \"{}\"", batch.batch_id, escape(t)),
                        CuePayload::Effect(id) => format!("batch={} effect {}", batch.batch_id, id.name()),
                    };
                    rows.push((
                        at + u64::from(c.start_ms),
                        format!(
                            "{}\t{:.4}\t{:.4}\t{payload}",
                            batch.kind.name(),
                            c.cue.azimuth,
                            c.cue.gain
                        ),
                    ));
                }
            }
            SinkEvent::Cancel { batch_id, .. } => {
                rows.push((at, format!("cancel\t-\t-\tbatch={batch_id}")));
            }
        }
    }
    // Stable: cues sharing a time stay in emission order.
    rows.sort_by_key(|r| r.0);
    let mut out = String::from("time_ms\tkind\tazimuth\tgain\tpayload_summary\n");
    for (t, r) in rows {
        let _ = writeln!(out, "{t}\t{r}");
    }
    out
}

/// Runs the frames through a synchronous pipeline and returns the transcript.
pub fn run(
    cfg: &EngineConfig,
    frames: &[Frame],
    backends: Backends,
    provider: Arc<dyn AiProvider>,
    presses: &[Press],
) -> Result<String, CliError> {
    let clock = Arc::new(ManualClock::new());
    let sink = Arc::new(RecordingSink::new(clock.clone()));
    let engine = wiring::engine(cfg, clock.clone(), provider, sink.clone());
    let pc: PipelineConfig = wiring::pipeline_config(cfg);
    let mut pipeline = SyncPipeline::new(engine.clone(), backends, pc);

    let press = |key: InteractionKey| {
        if let Err(e) = engine.dispatch(key) {
            log::warn!("{} at {:?}: {e}", key.name(), clock.now());
        }
    };
    for f in frames {
        clock.set(Duration::from_nanos(f.timestamp_ns()));
        let seq = f.seq();
        pipeline.process(f.clone());
        for p in presses.iter().filter(|p| p.after_seq == Some(seq)) {
            press(p.key);
        }
    }
    for p in presses.iter().filter(|p| p.after_seq.is_none()) {
        clock.advance(SETTLE);
        press(p.key);
    }
    Ok(transcript(&sink.events()))
}
