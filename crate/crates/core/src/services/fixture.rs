//! Deterministic provider backed by recorded responses.
//!
//! On disk a fixture directory holds:
//!
//! - `tones.tsv`: `scene-name<TAB>tone` lines for tone classification;
//! - `text/<key>.txt`: text responses, `<key>` being the request's hex
//!   [`CacheKey`](super::CacheKey);
//! - `audio/<key>.wav`: optional synthesis overrides (16-bit mono 48 kHz).
//!
//! Synthesis without an override returns silence lasting 60 ms per word.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use crate::scene::SceneTone;

use super::{AiProvider, AudioClip, CacheKey, ServiceError, ServiceKind, ServiceRequest, ServiceResponse};

pub const MS_PER_WORD: u32 = 60;

#[derive(Default)]
pub struct FixtureProvider {
    texts: HashMap<CacheKey, String>,
    clips: HashMap<CacheKey, AudioClip>,
    tones: HashMap<String, SceneTone>,
    scene: Option<String>,
    unavailable: HashSet<ServiceKind>,
    timing_out: HashSet<ServiceKind>,
    delays: HashMap<ServiceKind, Duration>,
    calls: [AtomicU64; 5],
}

impl FixtureProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a fixture directory; `scene` selects the tone mapping entry.
    pub fn load_dir(dir: &Path, scene: Option<&str>) -> Result<Self, std::io::Error> {
        let mut p = Self::new();
        let tones = dir.join("tones.tsv");
        if tones.exists() {
            for (i, line) in std::fs::read_to_string(&tones)?.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (name, tone) = line.split_once('\t').ok_or_else(|| {
                    invalid(format!("{}:{}: expected scene<TAB>tone", tones.display(), i + 1))
                })?;
                let tone = SceneTone::parse(tone).ok_or_else(|| {
                    invalid(format!("{}:{}: unknown tone {tone:?}", tones.display(), i + 1))
                })?;
                p.tones.insert(name.trim().to_string(), tone);
            }
        }
        for (sub, ext) in [("text", "txt"), ("audio", "wav")] {
            let d = dir.join(sub);
            if !d.is_dir() {
                continue;
            }
            for entry in std::fs::read_dir(&d)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) != Some(ext) {
                    continue;
                }
                let Some(key) = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .and_then(parse_key)
                else {
                    log::warn!("skipping fixture {} (name is not a hex key)", path.display());
                    continue;
                };
                let bytes = std::fs::read(&path)?;
                if ext == "txt" {
                    let text = String::from_utf8(bytes)
                        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                    p.texts.insert(key, text.trim_end_matches('\n').to_string());
                } else {
                    let clip = AudioClip::from_wav(&bytes)
                        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                    p.clips.insert(key, clip);
                }
            }
        }
        p.scene = scene.map(str::to_string);
        Ok(p)
    }

    /// Writes `text` as the recorded response for `request` under `dir`.
    pub fn record_text(dir: &Path, request: &ServiceRequest, text: &str) -> std::io::Result<()> {
        let d = dir.join("text");
        std::fs::create_dir_all(&d)?;
        std::fs::write(d.join(format!("{}.txt", request.cache_key().to_hex())), text)
    }

    pub fn insert_text(&mut self, request: &ServiceRequest, text: &str) {
        self.texts.insert(request.cache_key(), text.to_string());
    }

    pub fn insert_clip(&mut self, request: &ServiceRequest, clip: AudioClip) {
        self.clips.insert(request.cache_key(), clip);
    }

    pub fn with_scene_tone(mut self, scene: &str, tone: SceneTone) -> Self {
        self.tones.insert(scene.to_string(), tone);
        self
    }

    pub fn set_scene(&mut self, scene: Option<&str>) {
        self.scene = scene.map(str::to_string);
    }

    pub fn with_scene(mut self, scene: &str) -> Self {
        self.set_scene(Some(scene));
        self
    }

    pub fn unavailable(mut self, kind: ServiceKind) -> Self {
        self.unavailable.insert(kind);
        self
    }

    pub fn timing_out(mut self, kind: ServiceKind) -> Self {
        self.timing_out.insert(kind);
        self
    }

    /// Sleeps before answering `kind` requests.
    pub fn with_delay(mut self, kind: ServiceKind, delay: Duration) -> Self {
        self.delays.insert(kind, delay);
        self
    }

    pub fn calls(&self, kind: ServiceKind) -> u64 {
        self.calls[kind as usize].load(Ordering::SeqCst)
    }

    pub fn total_calls(&self) -> u64 {
        ServiceKind::ALL.iter().map(|k| self.calls(*k)).sum()
    }
}

fn invalid(msg: String) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg)
}

fn parse_key(s: &str) -> Option<CacheKey> {
    let bytes = hex::decode(s).ok()?;
    Some(CacheKey(bytes.try_into().ok()?))
}

impl AiProvider for FixtureProvider {
    fn call(&self, request: &ServiceRequest) -> Result<ServiceResponse, ServiceError> {
        let kind = request.kind;
        self.calls[kind as usize].fetch_add(1, Ordering::SeqCst);
        if let Some(d) = self.delays.get(&kind) {
            std::thread::sleep(*d);
        }
        if self.timing_out.contains(&kind) {
            return Err(ServiceError::Timeout(kind));
        }
        if self.unavailable.contains(&kind) {
            return Err(ServiceError::Unavailable(kind));
        }
        let key = request.cache_key();
        let missing = || ServiceError::NoFixture {
            kind,
            key: key.to_hex(),
        };
        match kind {
            ServiceKind::Ocr | ServiceKind::IconDescribe | ServiceKind::SceneDescribe => self
                .texts
                .get(&key)
                .map(|t| ServiceResponse::Text(t.clone()))
                .ok_or_else(missing),
            ServiceKind::ToneClassify => self
                .scene
                .as_ref()
                .and_then(|s| self.tones.get(s))
                .map(|t| ServiceResponse::Tone(*t))
                .ok_or_else(missing),
            ServiceKind::Synthesize => {
                if let Some(c) = self.clips.get(&key) {
                    return Ok(ServiceResponse::Clip(c.clone()));
                }
                let words = request
                    .text
                    .as_deref()
                    .unwrap_or("")
                    .split_whitespace()
                    .count() as u32;
                Ok(ServiceResponse::Clip(AudioClip::silence(MS_PER_WORD * words)))
            }
        }
    }
}
