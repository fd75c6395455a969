//! Proactive boundary warnings.

use std::time::Duration;

use crate::scene::{CuePayload, Detection, EffectId, SpatialCue};
use crate::spatial::{to_spatial, SpatialConfig};

use super::PipelineSnapshot;

const GUARDIAN: u8 = 20;
const OUT_OF_BOUNDS: u8 = 21;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeGuardConfig {
    pub confidence_gate: f32,
    pub cooldown: Duration,
}

impl Default for SafeGuardConfig {
    fn default() -> Self {
        Self {
            confidence_gate: 0.5,
            cooldown: Duration::from_millis(3000),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SafeGuard {
    cfg: SafeGuardConfig,
    last_warning: Option<Duration>,
}

impl SafeGuard {
    pub fn new(cfg: SafeGuardConfig) -> Self {
        Self {
            cfg,
            last_warning: None,
        }
    }

    /// The boundary detection to warn about: out-of-bounds before guardian,
    /// then highest confidence.
    pub fn pick<'a>(&self, dets: &'a [Detection]) -> Option<&'a Detection> {
        dets.iter()
            .filter(|d| {
                matches!(d.class.id, GUARDIAN | OUT_OF_BOUNDS)
                    && d.confidence >= self.cfg.confidence_gate
            })
            .max_by(|a, b| {
                (a.class.id == OUT_OF_BOUNDS)
                    .cmp(&(b.class.id == OUT_OF_BOUNDS))
                    .then(a.confidence.total_cmp(&b.confidence))
                    // Lower class id/x wins remaining ties, keeping the pick stable.
                    .then(b.bbox.x_min.total_cmp(&a.bbox.x_min))
            })
    }

    /// Called once per new detection batch.
    pub fn tick(
        &mut self,
        snapshot: &PipelineSnapshot,
        now: Duration,
        spatial: &SpatialConfig,
    ) -> Option<SpatialCue> {
        let det = self.pick(snapshot.detections())?;
        if let Some(last) = self.last_warning {
            if now.saturating_sub(last) < self.cfg.cooldown {
                return None;
            }
        }
        self.last_warning = Some(now);
        let g = to_spatial(
            &det.bbox,
            snapshot.depth_at(&det.bbox),
            snapshot.frame().width(),
            spatial,
        );
        Some(SpatialCue {
            azimuth: g.azimuth,
            gain: g.gain,
            distance: g.distance,
            payload: CuePayload::Effect(EffectId::Warning),
            tone: snapshot.tone(),
            order_index: 0,
        })
    }
}

impl Default for SafeGuard {
    fn default() -> Self {
        Self::new(SafeGuardConfig::default())
    }
}
