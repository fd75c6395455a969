//! OCR, multimodal LLM and text-to-speech behind one provider interface,
//! fronted by a content-addressed cache.
//!
//! [`Services`] is the handle the orchestrator uses. It hashes each request,
//! answers from [`ResponseCache`] when possible, otherwise calls the
//! configured [`AiProvider`] (fixture or HTTP) and records call latency.

mod audio;
mod cache;
pub mod fixture;
pub mod http;
pub mod prompts;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::SharedClock;
use crate::scene::{Frame, ImageCrop, SceneTone};

pub use audio::{AudioClip, SAMPLE_RATE};
pub use cache::{ttl_for, ResponseCache};
pub use fixture::FixtureProvider;
pub use http::{HttpProvider, HttpProviderConfig};

/// Longest description handed to speech synthesis.
pub const DESCRIPTION_CAP: usize = 280;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ServiceKind {
    Ocr,
    IconDescribe,
    SceneDescribe,
    ToneClassify,
    Synthesize,
}

impl ServiceKind {
    pub const ALL: [ServiceKind; 5] = [
        ServiceKind::Ocr,
        ServiceKind::IconDescribe,
        ServiceKind::SceneDescribe,
        ServiceKind::ToneClassify,
        ServiceKind::Synthesize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ServiceKind::Ocr => "ocr",
            ServiceKind::IconDescribe => "icon-describe",
            ServiceKind::SceneDescribe => "scene-describe",
            ServiceKind::ToneClassify => "tone-classify",
            ServiceKind::Synthesize => "synthesize",
        }
    }

    fn tag(self) -> u8 {
        self as u8
    }

    /// Mean live latency used as the alarm baseline.
    pub fn baseline(self) -> Option<Duration> {
        match self {
            ServiceKind::Ocr => Some(Duration::from_millis(1230)),
            ServiceKind::IconDescribe | ServiceKind::SceneDescribe => {
                Some(Duration::from_millis(1690))
            }
            _ => None,
        }
    }
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescribeKind {
    Icon,
    Scene,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("{0} timed out")]
    Timeout(ServiceKind),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("no fixture for {kind} request {key}")]
    NoFixture { kind: ServiceKind, key: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("could not decode response: {0}")]
    Decode(String),
    #[error("{0} unavailable")]
    Unavailable(ServiceKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRequest {
    pub kind: ServiceKind,
    pub image: Option<ImageCrop>,
    /// Context or prompt text for describe kinds; utterance for synthesis.
    pub text: Option<String>,
    /// Voice tone for synthesis; scene tone for scene descriptions.
    pub tone: Option<SceneTone>,
}

/// SHA-256 over the fields that identify a request.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(pub [u8; 32]);

impl CacheKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CacheKey({})", &self.to_hex()[..12])
    }
}

impl ServiceRequest {
    pub fn ocr(crop: ImageCrop) -> Self {
        Self {
            kind: ServiceKind::Ocr,
            image: Some(crop),
            text: None,
            tone: None,
        }
    }

    pub fn icon(crop: ImageCrop, context: impl Into<String>) -> Self {
        Self {
            kind: ServiceKind::IconDescribe,
            image: Some(crop),
            text: Some(context.into()),
            tone: None,
        }
    }

    pub fn scene(frame: ImageCrop, detection_summary: impl Into<String>, tone: SceneTone) -> Self {
        Self {
            kind: ServiceKind::SceneDescribe,
            image: Some(frame),
            text: Some(detection_summary.into()),
            tone: Some(tone),
        }
    }

    pub fn tone(frame: ImageCrop) -> Self {
        Self {
            kind: ServiceKind::ToneClassify,
            image: Some(frame),
            text: None,
            tone: None,
        }
    }

    pub fn synthesize(text: impl Into<String>, tone: SceneTone) -> Self {
        Self {
            kind: ServiceKind::Synthesize,
            image: None,
            text: Some(text.into()),
            tone: Some(tone),
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        match self.kind {
            ServiceKind::Synthesize => match &self.text {
                Some(t) if !t.trim().is_empty() => Ok(()),
                _ => Err(ServiceError::InvalidRequest(
                    "synthesis needs non-empty text".into(),
                )),
            },
            _ => match &self.image {
                Some(c) if c.width > 0 && c.height > 0 => Ok(()),
                _ => Err(ServiceError::InvalidRequest(format!(
                    "{} needs a non-empty image",
                    self.kind
                ))),
            },
        }
    }

    /// Key over kind, payload bytes and tone. Scene descriptions are keyed
    /// by their detection summary and tone only, so an unchanged scene
    /// reuses its description across frames.
    pub fn cache_key(&self) -> CacheKey {
        let mut h = Sha256::new();
        h.update([self.kind.tag()]);
        let hash_image = !matches!(self.kind, ServiceKind::SceneDescribe);
        match (&self.image, hash_image) {
            (Some(img), true) => {
                h.update([1]);
                h.update(img.width.to_le_bytes());
                h.update(img.height.to_le_bytes());
                h.update((img.pixels.len() as u64).to_le_bytes());
                h.update(&img.pixels);
            }
            _ => h.update([0]),
        }
        match &self.text {
            Some(t) => {
                h.update([1]);
                h.update((t.len() as u64).to_le_bytes());
                h.update(t.as_bytes());
            }
            None => h.update([0]),
        }
        match self.tone {
            Some(t) => h.update([1, t.as_u8()]),
            None => h.update([0]),
        }
        CacheKey(h.finalize().into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServiceResponse {
    Text(String),
    Tone(SceneTone),
    Clip(AudioClip),
}

impl ServiceResponse {
    fn kind_matches(&self, kind: ServiceKind) -> bool {
        matches!(
            (self, kind),
            (ServiceResponse::Text(_), ServiceKind::Ocr)
                | (ServiceResponse::Text(_), ServiceKind::IconDescribe)
                | (ServiceResponse::Text(_), ServiceKind::SceneDescribe)
                | (ServiceResponse::Tone(_), ServiceKind::ToneClassify)
                | (ServiceResponse::Clip(_), ServiceKind::Synthesize)
        )
    }
}

pub trait AiProvider: Send + Sync {
    fn call(&self, request: &ServiceRequest) -> Result<ServiceResponse, ServiceError>;

    /// Live providers get latency budget alarms.
    fn is_live(&self) -> bool {
        false
    }
}

/// Streaming latency summary with a bounded sample window for percentiles.
#[derive(Debug, Clone, Default)]
pub struct LatencyStats {
    pub count: u64,
    pub total: Duration,
    window: Vec<Duration>,
    next: usize,
}

const STATS_WINDOW: usize = 4096;

impl LatencyStats {
    pub fn record(&mut self, d: Duration) {
        self.count += 1;
        self.total += d;
        if self.window.len() < STATS_WINDOW {
            self.window.push(d);
        } else {
            self.window[self.next] = d;
            self.next = (self.next + 1) % STATS_WINDOW;
        }
    }

    pub fn mean(&self) -> Option<Duration> {
        (self.count > 0).then(|| self.total / self.count as u32)
    }

    pub fn samples(&self) -> &[Duration] {
        &self.window
    }
}

pub struct Services {
    provider: Arc<dyn AiProvider>,
    cache: ResponseCache,
    clock: SharedClock,
    stats: Mutex<HashMap<ServiceKind, LatencyStats>>,
}

impl Services {
    pub fn new(provider: Arc<dyn AiProvider>, clock: SharedClock) -> Self {
        Self {
            provider,
            cache: ResponseCache::new(Arc::clone(&clock)),
            clock,
            stats: Mutex::new(HashMap::new()),
        }
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Latency of provider calls (cache hits excluded).
    pub fn stats(&self) -> HashMap<ServiceKind, LatencyStats> {
        self.stats.lock().clone()
    }

    /// Answers from the cache, else from the provider. Only successful
    /// responses are stored. OCR is retried once on timeout or transport
    /// failure.
    pub fn cached(&self, request: &ServiceRequest) -> Result<ServiceResponse, ServiceError> {
        request.validate()?;
        let key = request.cache_key();
        if let Some(hit) = self.cache.get(&key, request.kind) {
            return Ok(hit);
        }
        let mut response = self.timed_call(request);
        if request.kind == ServiceKind::Ocr
            && matches!(
                response,
                Err(ServiceError::Timeout(_)) | Err(ServiceError::Transport(_))
            )
        {
            log::debug!("retrying ocr after {:?}", response);
            response = self.timed_call(request);
        }
        let response = response?;
        if !response.kind_matches(request.kind) {
            return Err(ServiceError::Decode(format!(
                "{} answered with {:?}",
                request.kind, response
            )));
        }
        self.cache.insert(key, request.kind, response.clone());
        Ok(response)
    }

    fn timed_call(&self, request: &ServiceRequest) -> Result<ServiceResponse, ServiceError> {
        let t0 = self.clock.now();
        let out = self.provider.call(request);
        let elapsed = self.clock.now().saturating_sub(t0);
        self.stats
            .lock()
            .entry(request.kind)
            .or_default()
            .record(elapsed);
        if self.provider.is_live() {
            if let Some(base) = request.kind.baseline() {
                if elapsed > base * 3 {
                    log::warn!(
                        "{} took {:.2}s, over 3x its {:.2}s baseline",
                        request.kind,
                        elapsed.as_secs_f64(),
                        base.as_secs_f64()
                    );
                }
            }
        }
        out
    }

    pub fn ocr(&self, crop: ImageCrop) -> Result<String, ServiceError> {
        match self.cached(&ServiceRequest::ocr(crop))? {
            ServiceResponse::Text(t) => Ok(t.trim().to_string()),
            _ => unreachable!("kind checked in cached()"),
        }
    }

    pub fn classify_tone(&self, frame: &Frame) -> Result<SceneTone, ServiceError> {
        match self.cached(&ServiceRequest::tone(frame.as_crop()))? {
            ServiceResponse::Tone(t) => Ok(t),
            _ => unreachable!("kind checked in cached()"),
        }
    }

    /// Description text capped at [`DESCRIPTION_CAP`] characters.
    pub fn describe(
        &self,
        kind: DescribeKind,
        image: ImageCrop,
        context: &str,
        tone: SceneTone,
    ) -> Result<String, ServiceError> {
        let request = match kind {
            DescribeKind::Icon => ServiceRequest::icon(image, context),
            DescribeKind::Scene => ServiceRequest::scene(image, context, tone),
        };
        match self.cached(&request)? {
            ServiceResponse::Text(t) => Ok(truncate_description(t.trim(), DESCRIPTION_CAP)),
            _ => unreachable!("kind checked in cached()"),
        }
    }

    pub fn synthesize(&self, text: &str, tone: SceneTone) -> Result<AudioClip, ServiceError> {
        match self.cached(&ServiceRequest::synthesize(text, tone))? {
            ServiceResponse::Clip(c) => Ok(c),
            _ => unreachable!("kind checked in cached()"),
        }
    }
}

/// Cuts `text` to at most `cap` characters, preferring the last sentence
/// end, then the last word break.
pub fn truncate_description(text: &str, cap: usize) -> String {
    if text.chars().count() <= cap {
        return text.to_string();
    }
    let head: String = text.chars().take(cap).collect();
    if let Some(i) = head.rfind(['.', '!', '?']) {
        return head[..=i].to_string();
    }
    match head.rfind(char::is_whitespace) {
        Some(i) if i > 0 => head[..i].trim_end().to_string(),
        _ => head,
    }
}
