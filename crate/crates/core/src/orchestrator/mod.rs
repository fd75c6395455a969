//! Interaction orchestration: latest-wins channels, keypress dispatch,
//! SafeGuard monitoring and latency accounting.
//!
//! Data flows one way. Perception workers push into [`Channels`]; the
//! [`Engine`] snapshots them on a keypress, emits the preamble at once, runs
//! the interaction on a bounded service pool and hands the resulting
//! [`CueBatch`] to a [`CueSink`].

pub mod channels;
pub mod engine;
pub mod interactions;
pub mod ledger;
pub mod pipeline;
pub mod pool;
pub mod safeguard;
pub mod sink;
pub mod tone;

pub use channels::{ChannelKind, Channels, LatestSlot, Part, PipelineSnapshot, FALLBACK_DEPTH};
pub use engine::{DispatchReport, Engine, EngineSettings};
pub use ledger::{realized_latency, LatencyLedger};
pub use pipeline::{Backends, Pipeline, PipelineConfig, Stage, StageStats, SyncPipeline};
pub use pool::ServicePool;
pub use safeguard::{SafeGuard, SafeGuardConfig};
pub use sink::{CueSink, NullSink, RecordingSink, SinkEvent};
pub use tone::{ToneConfig, ToneTracker};

use thiserror::Error;

use crate::scene::{CuePayload, EffectId, SceneTone, SpatialCue};
use crate::services::AudioClip;
use crate::transport::wire::{CueBatchBody, PayloadKind, WireCue};

pub const NO_SCENE_TEXT: &str = "No scene available";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrchestratorError {
    #[error("no frame has been captured yet")]
    NoFrameYet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InteractionKey {
    ContextCompass,
    SceneSweep,
    AimAssist,
}

impl InteractionKey {
    pub const ALL: [InteractionKey; 3] = [
        InteractionKey::ContextCompass,
        InteractionKey::SceneSweep,
        InteractionKey::AimAssist,
    ];

    /// Keypress body value 0/1/2.
    pub fn from_wire(key: u8) -> Option<Self> {
        Self::ALL.get(key as usize).copied()
    }

    pub fn wire(self) -> u8 {
        self as u8
    }

    /// Stdin command form: `cc`, `ss` or `aa`.
    pub fn parse_command(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cc" => Some(InteractionKey::ContextCompass),
            "ss" => Some(InteractionKey::SceneSweep),
            "aa" => Some(InteractionKey::AimAssist),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InteractionKey::ContextCompass => "context-compass",
            InteractionKey::SceneSweep => "scene-sweep",
            InteractionKey::AimAssist => "aim-assist",
        }
    }

    pub fn preamble(self) -> &'static str {
        match self {
            InteractionKey::ContextCompass => "Describing Scene",
            InteractionKey::SceneSweep => "Reading all objects",
            InteractionKey::AimAssist => "Enhanced Object Reading",
        }
    }
}

/// Playback length assumed for a bundled effect.
pub fn effect_duration_ms(effect: EffectId) -> u32 {
    match effect {
        EffectId::Warning => 600,
        EffectId::Click => 120,
        EffectId::SweepTick => 60,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchKind {
    Preamble(InteractionKey),
    Result(InteractionKey),
    Warning,
    Error,
}

impl BatchKind {
    pub fn name(self) -> String {
        match self {
            BatchKind::Preamble(k) => format!("preamble:{}", k.name()),
            BatchKind::Result(k) => k.name().to_string(),
            BatchKind::Warning => "warning".into(),
            BatchKind::Error => "error".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledCue {
    /// Offset from batch receipt.
    pub start_ms: u32,
    pub duration_ms: u32,
    pub cue: SpatialCue,
    /// Synthesized speech; `None` for effects.
    pub audio: Option<AudioClip>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CueBatch {
    pub batch_id: u32,
    pub kind: BatchKind,
    pub tone: SceneTone,
    pub cues: Vec<ScheduledCue>,
}

impl CueBatch {
    /// When the last cue finishes, relative to receipt.
    pub fn end_ms(&self) -> u32 {
        self.cues
            .iter()
            .map(|c| c.start_ms.saturating_add(c.duration_ms))
            .max()
            .unwrap_or(0)
    }

    pub fn to_wire(&self) -> CueBatchBody {
        CueBatchBody {
            batch_id: self.batch_id,
            tone: self.tone.as_u8(),
            cues: self
                .cues
                .iter()
                .map(|c| {
                    let (payload_kind, payload) = match (&c.cue.payload, &c.audio) {
                        (CuePayload::Speech(_), Some(clip)) => {
                            (PayloadKind::SpeechPcm, clip.to_le_bytes())
                        }
                        (CuePayload::Speech(_), None) => (
                            PayloadKind::EffectId,
                            EffectId::Click.name().as_bytes().to_vec(),
                        ),
                        (CuePayload::Effect(e), _) => {
                            (PayloadKind::EffectId, e.name().as_bytes().to_vec())
                        }
                    };
                    WireCue {
                        order_index: c.cue.order_index,
                        start_ms: c.start_ms,
                        azimuth: c.cue.azimuth as f32,
                        gain: c.cue.gain as f32,
                        distance: c.cue.distance as f32,
                        payload_kind,
                        payload,
                    }
                })
                .collect(),
        }
    }
}
