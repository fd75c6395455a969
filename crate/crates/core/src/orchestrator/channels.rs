//! Latest-wins channels and pipeline snapshots.

use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;

use crate::clock::SharedClock;
use crate::scene::{BBox, DepthMap, Detection, Frame, PointerRay, SceneTone};
use crate::spatial::sample_depth;

use super::OrchestratorError;

/// Depth assumed for an object when no usable depth map exists.
pub const FALLBACK_DEPTH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    Frame,
    Detections,
    Depth,
    Pointer,
    Tone,
}

#[derive(Debug, Clone)]
struct Stamped<T> {
    value: T,
    seq: u64,
    at: Duration,
}

/// Single-slot buffer. A push replaces the held value unless its seq is
/// older than what is already held.
#[derive(Debug, Clone)]
pub struct LatestSlot<T> {
    slot: Option<Stamped<T>>,
}

impl<T> Default for LatestSlot<T> {
    fn default() -> Self {
        Self { slot: None }
    }
}

impl<T: Clone> LatestSlot<T> {
    /// Returns false (and drops `value`) when `seq` is stale.
    pub fn push_latest(&mut self, value: T, seq: u64, at: Duration) -> bool {
        if matches!(&self.slot, Some(held) if seq < held.seq) {
            return false;
        }
        self.slot = Some(Stamped { value, seq, at });
        true
    }

    pub fn seq(&self) -> Option<u64> {
        self.slot.as_ref().map(|s| s.seq)
    }

    fn part(&self, now: Duration) -> Option<Part<T>> {
        self.slot.as_ref().map(|s| Part {
            value: s.value.clone(),
            seq: s.seq,
            staleness: now.saturating_sub(s.at),
        })
    }
}

/// One channel's value as seen by a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Part<T> {
    pub value: T,
    /// Seq of the frame the value was computed from.
    pub seq: u64,
    pub staleness: Duration,
}

#[derive(Debug, Default)]
struct Slots {
    frame: LatestSlot<Frame>,
    detections: LatestSlot<Arc<[Detection]>>,
    depth: LatestSlot<DepthMap>,
    pointer: LatestSlot<Option<PointerRay>>,
    tone: LatestSlot<SceneTone>,
}

/// The five pipeline channels behind one lock so snapshots are atomic.
pub struct Channels {
    slots: Mutex<Slots>,
    clock: SharedClock,
}

impl Channels {
    pub fn new(clock: SharedClock) -> Self {
        Self {
            slots: Mutex::new(Slots::default()),
            clock,
        }
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    pub fn push_frame(&self, frame: Frame) -> bool {
        let now = self.clock.now();
        let seq = frame.seq();
        self.slots.lock().frame.push_latest(frame, seq, now)
    }

    pub fn push_detections(&self, seq: u64, dets: impl Into<Arc<[Detection]>>) -> bool {
        let now = self.clock.now();
        self.slots.lock().detections.push_latest(dets.into(), seq, now)
    }

    pub fn push_depth(&self, seq: u64, depth: DepthMap) -> bool {
        let now = self.clock.now();
        self.slots.lock().depth.push_latest(depth, seq, now)
    }

    /// `None` records that the pointer detector ran and found nothing.
    pub fn push_pointer(&self, seq: u64, ray: Option<PointerRay>) -> bool {
        let now = self.clock.now();
        self.slots.lock().pointer.push_latest(ray, seq, now)
    }

    pub fn push_tone(&self, seq: u64, tone: SceneTone) -> bool {
        let now = self.clock.now();
        self.slots.lock().tone.push_latest(tone, seq, now)
    }

    pub fn seq_of(&self, kind: ChannelKind) -> Option<u64> {
        let s = self.slots.lock();
        match kind {
            ChannelKind::Frame => s.frame.seq(),
            ChannelKind::Detections => s.detections.seq(),
            ChannelKind::Depth => s.depth.seq(),
            ChannelKind::Pointer => s.pointer.seq(),
            ChannelKind::Tone => s.tone.seq(),
        }
    }

    pub fn snapshot(&self) -> Result<PipelineSnapshot, OrchestratorError> {
        let now = self.clock.now();
        let s = self.slots.lock();
        let frame = s.frame.part(now).ok_or(OrchestratorError::NoFrameYet)?;
        Ok(PipelineSnapshot {
            frame,
            detections: s.detections.part(now),
            depth: s.depth.part(now),
            pointer: s.pointer.part(now),
            tone: s.tone.part(now),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineSnapshot {
    pub frame: Part<Frame>,
    pub detections: Option<Part<Arc<[Detection]>>>,
    pub depth: Option<Part<DepthMap>>,
    pub pointer: Option<Part<Option<PointerRay>>>,
    pub tone: Option<Part<SceneTone>>,
}

impl PipelineSnapshot {
    /// Builds a snapshot whose parts all come from `frame` with zero staleness.
    pub fn from_parts(
        frame: Frame,
        detections: Vec<Detection>,
        depth: Option<DepthMap>,
        pointer: Option<PointerRay>,
        tone: SceneTone,
    ) -> Self {
        let seq = frame.seq();
        let part = |value| Part {
            value,
            seq,
            staleness: Duration::ZERO,
        };
        Self {
            frame: part(frame),
            detections: Some(Part {
                value: detections.into(),
                seq,
                staleness: Duration::ZERO,
            }),
            depth: depth.map(|d| Part {
                value: d,
                seq,
                staleness: Duration::ZERO,
            }),
            pointer: Some(Part {
                value: pointer,
                seq,
                staleness: Duration::ZERO,
            }),
            tone: Some(Part {
                value: tone,
                seq,
                staleness: Duration::ZERO,
            }),
        }
    }

    pub fn frame(&self) -> &Frame {
        &self.frame.value
    }

    pub fn detections(&self) -> &[Detection] {
        self.detections.as_ref().map(|p| &p.value[..]).unwrap_or(&[])
    }

    pub fn pointer(&self) -> Option<&PointerRay> {
        self.pointer.as_ref().and_then(|p| p.value.as_ref())
    }

    pub fn tone(&self) -> SceneTone {
        self.tone.as_ref().map(|p| p.value).unwrap_or_default()
    }

    pub fn staleness(&self, kind: ChannelKind) -> Option<Duration> {
        match kind {
            ChannelKind::Frame => Some(self.frame.staleness),
            ChannelKind::Detections => self.detections.as_ref().map(|p| p.staleness),
            ChannelKind::Depth => self.depth.as_ref().map(|p| p.staleness),
            ChannelKind::Pointer => self.pointer.as_ref().map(|p| p.staleness),
            ChannelKind::Tone => self.tone.as_ref().map(|p| p.staleness),
        }
    }

    /// Median depth under `b`, or [`FALLBACK_DEPTH`] without a depth map
    /// matching the frame's dimensions.
    pub fn depth_at(&self, b: &BBox) -> f64 {
        match &self.depth {
            Some(p) if p.value.dimensions() == self.frame.value.dimensions() => {
                sample_depth(&p.value, b)
            }
            _ => FALLBACK_DEPTH,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::scene::ObjectClass;

    fn channels() -> (Channels, ManualClock) {
        let clock = ManualClock::new();
        (Channels::new(Arc::new(clock.clone())), clock)
    }

    fn det() -> Detection {
        Detection {
            class: ObjectClass::from_id(0).unwrap(),
            bbox: BBox::new(0.0, 0.0, 4.0, 4.0),
            confidence: 0.9,
        }
    }

    #[test]
    fn empty_pipeline_has_no_snapshot() {
        let (c, _) = channels();
        assert!(matches!(c.snapshot(), Err(OrchestratorError::NoFrameYet)));
    }

    #[test]
    fn latest_wins_and_stale_pushes_are_dropped() {
        let (c, _) = channels();
        c.push_frame(Frame::filled(4, 4, [0; 3], 7).unwrap());
        assert!(c.push_detections(5, vec![det()]));
        assert!(c.push_detections(7, vec![det(), det()]));
        assert!(!c.push_detections(5, vec![]));
        let s = c.snapshot().unwrap();
        let d = s.detections.unwrap();
        assert_eq!((d.seq, d.value.len()), (7, 2));
        assert!(s.depth.is_none());
        assert_eq!(s.tone.map(|t| t.value), None);
    }

    #[test]
    fn staleness_tracks_each_channel() {
        let (c, clock) = channels();
        c.push_depth(0, DepthMap::constant(4, 4, 0.5).unwrap());
        clock.advance(Duration::from_millis(500));
        c.push_frame(Frame::filled(4, 4, [0; 3], 1).unwrap());
        c.push_detections(1, vec![det()]);
        let s = c.snapshot().unwrap();
        assert_eq!(s.staleness(ChannelKind::Depth), Some(Duration::from_millis(500)));
        assert_eq!(s.staleness(ChannelKind::Frame), Some(Duration::ZERO));
        assert_eq!(s.staleness(ChannelKind::Detections), Some(Duration::ZERO));
        assert_eq!(s.staleness(ChannelKind::Pointer), None);
    }

    #[test]
    fn depth_falls_back_on_dimension_mismatch() {
        let s = PipelineSnapshot::from_parts(
            Frame::filled(8, 8, [0; 3], 0).unwrap(),
            vec![],
            Some(DepthMap::constant(4, 4, 0.1).unwrap()),
            None,
            SceneTone::Neutral,
        );
        assert_eq!(s.depth_at(&BBox::new(0.0, 0.0, 2.0, 2.0)), FALLBACK_DEPTH);
    }

    #[test]
    fn reads_are_monotonic_under_concurrent_writers() {
        let (c, _) = channels();
        let c = Arc::new(c);
        c.push_frame(Frame::filled(2, 2, [0; 3], 0).unwrap());
        let writer = {
            let c = c.clone();
            std::thread::spawn(move || {
                for seq in 0..5000u64 {
                    // Out-of-order delivery: every third push is older.
                    let s = if seq % 3 == 0 { seq.saturating_sub(2) } else { seq };
                    c.push_tone(s, SceneTone::Neutral);
                }
            })
        };
        let mut last = 0;
        while !writer.is_finished() {
            if let Some(t) = c.snapshot().unwrap().tone {
                assert!(t.seq >= last);
                last = t.seq;
            }
        }
        writer.join().unwrap();
    }
}
