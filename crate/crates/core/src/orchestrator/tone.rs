//! Scene tone tracking.

use std::time::Duration;

use crate::scene::{Frame, SceneTone};
use crate::services::Services;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneConfig {
    pub refresh_interval: Duration,
    /// Mean brightness change (fraction of full scale) treated as a new scene.
    pub brightness_shift: f64,
}

impl Default for ToneConfig {
    fn default() -> Self {
        Self {
            refresh_interval: Duration::from_secs(10),
            brightness_shift: 0.25,
        }
    }
}

/// Holds the current tone and decides when to ask the LLM again.
#[derive(Debug, Clone)]
pub struct ToneTracker {
    cfg: ToneConfig,
    tone: SceneTone,
    last_refresh: Option<Duration>,
    last_brightness: Option<f64>,
}

impl ToneTracker {
    pub fn new(cfg: ToneConfig) -> Self {
        Self {
            cfg,
            tone: SceneTone::default(),
            last_refresh: None,
            last_brightness: None,
        }
    }

    pub fn tone(&self) -> SceneTone {
        self.tone
    }

    pub fn due(&self, now: Duration, brightness: f64) -> bool {
        match (self.last_refresh, self.last_brightness) {
            (Some(t), Some(b)) => {
                now.saturating_sub(t) >= self.cfg.refresh_interval
                    || (brightness - b).abs() > self.cfg.brightness_shift
            }
            _ => true,
        }
    }

    /// Refreshes when due. A failed classification keeps the previous tone
    /// and still counts as a refresh, so a down service is not hammered.
    pub fn observe(&mut self, frame: &Frame, now: Duration, services: &Services) -> SceneTone {
        let brightness = frame.mean_brightness();
        if !self.due(now, brightness) {
            return self.tone;
        }
        self.last_refresh = Some(now);
        self.last_brightness = Some(brightness);
        match services.classify_tone(frame) {
            Ok(t) => self.tone = t,
            Err(e) => log::warn!("tone classification failed, keeping {}: {e}", self.tone.name()),
        }
        self.tone
    }
}

impl Default for ToneTracker {
    fn default() -> Self {
        Self::new(ToneConfig::default())
    }
}
