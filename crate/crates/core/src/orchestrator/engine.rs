//! Keypress dispatch and SafeGuard emission.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;

use crate::clock::SharedClock;
use crate::scene::{CuePayload, EffectId, SceneTone, SpatialCue};
use crate::services::{AudioClip, Services};
use crate::spatial::{schedule_sweep, SpatialConfig};

use super::interactions::{aim_assist, context_compass, scene_sweep, CallLog, InteractionCtx};
use super::{
    effect_duration_ms, BatchKind, Channels, CueBatch, CueSink, InteractionKey, LatencyLedger,
    OrchestratorError, PipelineSnapshot, SafeGuard, SafeGuardConfig, ScheduledCue, ServicePool,
    NO_SCENE_TEXT,
};

/// Ledgers kept for reporting; older ones are dropped.
const LEDGER_CAPACITY: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineSettings {
    pub spatial: SpatialConfig,
    pub safeguard: SafeGuardConfig,
    /// Provider calls allowed in flight at once.
    pub pool_size: usize,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            spatial: SpatialConfig::default(),
            safeguard: SafeGuardConfig::default(),
            pool_size: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchReport {
    pub ledger: LatencyLedger,
    pub result: CueBatch,
}

#[derive(Debug, Clone, Copy)]
struct Playing {
    batch_id: u32,
    ends_at: Duration,
}

pub struct Engine {
    channels: Arc<Channels>,
    services: Arc<Services>,
    sink: Arc<dyn CueSink>,
    clock: SharedClock,
    settings: EngineSettings,
    pool: ServicePool,
    next_batch: AtomicU32,
    playing: Mutex<Option<Playing>>,
    /// Pre-synthesized fixed utterances by (text, tone).
    utterances: Mutex<HashMap<(&'static str, SceneTone), AudioClip>>,
    safeguard: Mutex<SafeGuard>,
    ledgers: Mutex<VecDeque<LatencyLedger>>,
}

impl Engine {
    /// Builds the engine and synthesizes every preamble and the error
    /// utterance in all five tones so keypresses never wait on TTS.
    pub fn new(
        channels: Arc<Channels>,
        services: Arc<Services>,
        sink: Arc<dyn CueSink>,
        settings: EngineSettings,
    ) -> Self {
        let clock = channels.clock().clone();
        let engine = Self {
            channels,
            services,
            sink,
            clock,
            pool: ServicePool::new(settings.pool_size),
            settings,
            next_batch: AtomicU32::new(1),
            playing: Mutex::new(None),
            utterances: Mutex::new(HashMap::new()),
            safeguard: Mutex::new(SafeGuard::new(settings.safeguard)),
            ledgers: Mutex::new(VecDeque::new()),
        };
        engine.warm_up();
        engine
    }

    fn warm_up(&self) {
        let texts: Vec<&'static str> = InteractionKey::ALL
            .iter()
            .map(|k| k.preamble())
            .chain([NO_SCENE_TEXT])
            .collect();
        let jobs: Vec<(&'static str, SceneTone)> = texts
            .iter()
            .flat_map(|t| SceneTone::ALL.iter().map(move |tone| (*t, *tone)))
            .collect();
        let clips = self.pool.map(&jobs, |(t, tone)| self.services.synthesize(t, *tone));
        let mut cache = self.utterances.lock();
        for (job, clip) in jobs.into_iter().zip(clips) {
            match clip {
                Ok(c) => {
                    cache.insert(job, c);
                }
                Err(e) => log::warn!("could not pre-synthesize {:?} ({}): {e}", job.0, job.1.name()),
            }
        }
    }

    pub fn channels(&self) -> &Arc<Channels> {
        &self.channels
    }

    pub fn services(&self) -> &Arc<Services> {
        &self.services
    }

    pub fn pool(&self) -> &ServicePool {
        &self.pool
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    pub fn ledgers(&self) -> Vec<LatencyLedger> {
        self.ledgers.lock().iter().cloned().collect()
    }

    fn next_id(&self) -> u32 {
        self.next_batch.fetch_add(1, Ordering::SeqCst)
    }

    /// Cancels whatever batch is still playing at `now`.
    fn cancel_playing(&self, now: Duration) {
        let mut playing = self.playing.lock();
        if let Some(p) = playing.take() {
            if p.ends_at > now {
                self.sink.cancel(p.batch_id);
            }
        }
    }

    fn emit(&self, batch: &CueBatch, start_offset_ms: u32) {
        let now = self.clock.now();
        self.sink.emit(batch);
        let ends_at = now + Duration::from_millis(u64::from(start_offset_ms.max(batch.end_ms())));
        *self.playing.lock() = Some(Playing {
            batch_id: batch.batch_id,
            ends_at,
        });
    }

    /// A single centered utterance, falling back to a click when the text
    /// cannot be voiced.
    fn utterance_batch(&self, kind: BatchKind, text: &'static str, tone: SceneTone) -> CueBatch {
        let cached = self.utterances.lock().get(&(text, tone)).cloned();
        let clip = cached.or_else(|| match self.services.synthesize(text, tone) {
            Ok(c) => {
                self.utterances.lock().insert((text, tone), c.clone());
                Some(c)
            }
            Err(e) => {
                log::warn!("synthesis of {text:?} failed: {e}");
                None
            }
        });
        let cue = match clip {
            Some(audio) => ScheduledCue {
                start_ms: 0,
                duration_ms: audio.duration_ms(),
                cue: SpatialCue::centered(CuePayload::Speech(text.into()), tone),
                audio: Some(audio),
            },
            None => click(SpatialCue::centered(CuePayload::Speech(text.into()), tone)),
        };
        CueBatch {
            batch_id: self.next_id(),
            kind,
            tone,
            cues: vec![cue],
        }
    }

    /// Synthesizes speech cues on the pool; effects pass through.
    fn realize(&self, cues: Vec<SpatialCue>) -> Vec<ScheduledCue> {
        self.pool.map(&cues, |cue| match &cue.payload {
            CuePayload::Speech(text) => match self.services.synthesize(text, cue.tone) {
                Ok(audio) => ScheduledCue {
                    start_ms: 0,
                    duration_ms: audio.duration_ms(),
                    cue: cue.clone(),
                    audio: Some(audio),
                },
                Err(e) => {
                    log::warn!("synthesis failed, sending click: {e}");
                    click(cue.clone())
                }
            },
            CuePayload::Effect(effect) => ScheduledCue {
                start_ms: 0,
                duration_ms: effect_duration_ms(*effect),
                cue: cue.clone(),
                audio: None,
            },
        })
    }

    /// Runs one interaction end to end. Without a frame the spoken error is
    /// emitted and `NoFrameYet` returned.
    pub fn dispatch(&self, key: InteractionKey) -> Result<DispatchReport, OrchestratorError> {
        let t0 = self.clock.now();
        self.cancel_playing(t0);
        let snapshot = match self.channels.snapshot() {
            Ok(s) => s,
            Err(e) => {
                let batch = self.utterance_batch(BatchKind::Error, NO_SCENE_TEXT, SceneTone::Neutral);
                self.emit(&batch, 0);
                return Err(e);
            }
        };
        let tone = snapshot.tone();
        let preamble = self.utterance_batch(BatchKind::Preamble(key), key.preamble(), tone);
        let preamble_ms = preamble.end_ms();
        self.emit(&preamble, 0);
        let t_preamble = self.clock.now();

        let calls = CallLog::default();
        let cues = self.run_interaction(key, &snapshot, &calls);
        let t_interaction = self.clock.now();

        let realized = self.realize(cues);
        let t_synthesis = self.clock.now();

        // Results start once the preamble has finished playing.
        let preamble_left = (t_preamble + Duration::from_millis(u64::from(preamble_ms)))
            .saturating_sub(t_synthesis);
        let offset = preamble_left.as_millis().min(u128::from(u32::MAX)) as u32;
        let cues = timeline(realized, &self.settings.spatial, offset);
        let result = CueBatch {
            batch_id: self.next_id(),
            kind: BatchKind::Result(key),
            tone,
            cues,
        };
        self.emit(&result, offset);
        let t_emit = self.clock.now();

        let ledger = LatencyLedger {
            key,
            preamble_batch: preamble.batch_id,
            result_batch: result.batch_id,
            to_preamble: t_preamble.saturating_sub(t0),
            interaction: t_interaction.saturating_sub(t_preamble),
            synthesis: t_synthesis.saturating_sub(t_interaction),
            emission: t_emit.saturating_sub(t_synthesis),
            service_calls: calls.into_inner(),
            preamble_ms,
            total_ms: t_emit.saturating_sub(t0).as_millis().min(u128::from(u32::MAX)) as u32,
        };
        {
            let mut l = self.ledgers.lock();
            if l.len() == LEDGER_CAPACITY {
                l.pop_front();
            }
            l.push_back(ledger.clone());
        }
        Ok(DispatchReport { ledger, result })
    }

    fn run_interaction(
        &self,
        key: InteractionKey,
        snapshot: &PipelineSnapshot,
        calls: &CallLog,
    ) -> Vec<SpatialCue> {
        let ctx = InteractionCtx {
            services: &self.services,
            pool: &self.pool,
            spatial: &self.settings.spatial,
            clock: &self.clock,
            calls,
        };
        match key {
            InteractionKey::ContextCompass => context_compass(snapshot, &ctx),
            InteractionKey::SceneSweep => scene_sweep(snapshot, &ctx),
            InteractionKey::AimAssist => aim_assist(snapshot, &ctx),
        }
    }

    /// Checks the latest detections for boundary objects and emits a warning
    /// batch when SafeGuard fires. The warning interrupts any playback.
    pub fn safeguard_tick(&self, snapshot: &PipelineSnapshot) -> Option<CueBatch> {
        let now = self.clock.now();
        let cue = self
            .safeguard
            .lock()
            .tick(snapshot, now, &self.settings.spatial)?;
        self.cancel_playing(now);
        let batch = CueBatch {
            batch_id: self.next_id(),
            kind: BatchKind::Warning,
            tone: cue.tone,
            cues: vec![ScheduledCue {
                start_ms: 0,
                duration_ms: effect_duration_ms(EffectId::Warning),
                cue,
                audio: None,
            }],
        };
        self.emit(&batch, 0);
        Some(batch)
    }
}

fn click(mut cue: SpatialCue) -> ScheduledCue {
    cue.payload = CuePayload::Effect(EffectId::Click);
    ScheduledCue {
        start_ms: 0,
        duration_ms: effect_duration_ms(EffectId::Click),
        cue,
        audio: None,
    }
}

/// Back-to-back schedule shifted by `offset_ms`; order indices are
/// renumbered to playback order.
fn timeline(
    cues: Vec<ScheduledCue>,
    spatial: &SpatialConfig,
    offset_ms: u32,
) -> Vec<ScheduledCue> {
    let audio: Vec<Option<AudioClip>> = cues.iter().map(|c| c.audio.clone()).collect();
    schedule_sweep(cues.into_iter().map(|c| (c.cue, c.duration_ms)), spatial)
        .into_iter()
        .zip(audio)
        .enumerate()
        .map(|(i, (entry, audio))| {
            let mut cue = entry.cue;
            cue.order_index = u16::try_from(i).unwrap_or(u16::MAX);
            ScheduledCue {
                start_ms: entry.start_ms.saturating_add(offset_ms),
                duration_ms: entry.duration_ms,
                cue,
                audio,
            }
        })
        .collect()
}
