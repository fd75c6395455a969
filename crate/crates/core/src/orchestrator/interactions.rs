//! The three keyed interactions. Each turns a snapshot into placed cues;
//! synthesis and scheduling happen in the engine.

use std::time::Duration;

use parking_lot::Mutex;

use crate::clock::SharedClock;
use crate::scene::{BBox, Category, CuePayload, Detection, SpatialCue};
use crate::services::{prompts, DescribeKind, ServiceError, ServiceKind, Services};
use crate::spatial::{near_pointer, order_sweep, to_spatial, SpatialConfig};

use super::pool::fan_out;
use super::{PipelineSnapshot, ServicePool};

pub const NO_OBJECTS_TEXT: &str = "No objects found";
pub const NOTHING_TO_DESCRIBE_TEXT: &str = "Nothing to describe";
/// Classes listed in the ContextCompass fallback.
pub const FALLBACK_LIMIT: usize = 5;

/// Everything an interaction may use besides the snapshot.
pub struct InteractionCtx<'a> {
    pub services: &'a Services,
    pub pool: &'a ServicePool,
    pub spatial: &'a SpatialConfig,
    pub clock: &'a SharedClock,
    pub calls: &'a CallLog,
}

/// Provider round trips made during one dispatch.
#[derive(Default)]
pub struct CallLog(Mutex<Vec<(ServiceKind, Duration)>>);

impl CallLog {
    pub fn record(&self, kind: ServiceKind, d: Duration) {
        self.0.lock().push((kind, d));
    }

    pub fn into_inner(self) -> Vec<(ServiceKind, Duration)> {
        self.0.into_inner()
    }
}

impl InteractionCtx<'_> {
    fn timed<R>(&self, kind: ServiceKind, f: impl FnOnce() -> R) -> R {
        self.pool.run(|| {
            let t0 = self.clock.now();
            let r = f();
            self.calls.record(kind, self.clock.now().saturating_sub(t0));
            r
        })
    }

    fn ocr(&self, s: &PipelineSnapshot, b: &BBox) -> Result<String, ServiceError> {
        self.timed(ServiceKind::Ocr, || self.services.ocr(s.frame().crop(b)))
    }

    fn describe_icon(&self, s: &PipelineSnapshot, d: &Detection, context: &str) -> Result<String, ServiceError> {
        self.timed(ServiceKind::IconDescribe, || {
            self.services
                .describe(DescribeKind::Icon, s.frame().crop(&d.bbox), context, s.tone())
        })
    }
}

/// "left", "center" or "right" by which third of the frame holds `cx`.
pub fn third(cx: f64, frame_width: u32) -> &'static str {
    let w = frame_width as f64;
    if cx < w / 3.0 {
        "left"
    } else if cx >= 2.0 * w / 3.0 {
        "right"
    } else {
        "center"
    }
}

fn by_confidence(dets: &[Detection]) -> Vec<Detection> {
    let mut v = dets.to_vec();
    v.sort_by(crate::perception::detection_order);
    v
}

fn listing(dets: &[Detection], frame_width: u32) -> String {
    dets.iter()
        .map(|d| format!("{} {}", d.class.name, third(d.bbox.center().0, frame_width)))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Detection list handed to the scene LLM: every detection with its third,
/// in confidence order.
pub fn detection_summary(dets: &[Detection], frame_width: u32) -> String {
    let sorted = by_confidence(dets);
    if sorted.is_empty() {
        return "0 objects:".into();
    }
    format!("{} objects: {}", sorted.len(), listing(&sorted, frame_width))
}

/// `<n> objects: <top five with thirds>`.
pub fn compass_fallback(dets: &[Detection], frame_width: u32) -> String {
    let sorted = by_confidence(dets);
    if sorted.is_empty() {
        return "0 objects:".into();
    }
    let top = &sorted[..sorted.len().min(FALLBACK_LIMIT)];
    format!("{} objects: {}", sorted.len(), listing(top, frame_width))
}

fn speech(text: impl Into<String>) -> CuePayload {
    CuePayload::Speech(text.into())
}

fn placed(s: &PipelineSnapshot, d: &Detection, payload: CuePayload, cfg: &SpatialConfig, index: u16) -> SpatialCue {
    let g = to_spatial(&d.bbox, s.depth_at(&d.bbox), s.frame().width(), cfg);
    SpatialCue {
        azimuth: g.azimuth,
        gain: g.gain,
        distance: g.distance,
        payload,
        tone: s.tone(),
        order_index: index,
    }
}

/// One centered scene summary from the LLM, or the template on failure.
pub fn context_compass(s: &PipelineSnapshot, ctx: &InteractionCtx<'_>) -> Vec<SpatialCue> {
    let dets = s.detections();
    let width = s.frame().width();
    let tone = s.tone();
    let summary = detection_summary(dets, width);
    let text = ctx
        .timed(ServiceKind::SceneDescribe, || {
            ctx.services
                .describe(DescribeKind::Scene, s.frame().as_crop(), &summary, tone)
        })
        .ok()
        .filter(|t| !t.is_empty())
        .unwrap_or_else(|| compass_fallback(dets, width));
    vec![SpatialCue::centered(speech(text), tone)]
}

/// Spoken text for a text-bearing detection: OCR, then an icon description
/// for graphics. `None` when neither produced anything.
fn read_text(s: &PipelineSnapshot, d: &Detection, ctx: &InteractionCtx<'_>) -> Option<String> {
    match ctx.ocr(s, &d.bbox) {
        Ok(t) if !t.is_empty() => return Some(t),
        Ok(_) => {}
        Err(e) => log::debug!("ocr failed for {}: {e}", d.class.name),
    }
    if d.class.is_graphic() {
        match ctx.describe_icon(s, d, d.class.name) {
            Ok(t) if !t.is_empty() => return Some(t),
            Ok(_) => {}
            Err(e) => log::debug!("icon description failed for {}: {e}", d.class.name),
        }
    }
    None
}

fn labelled(d: &Detection, text: Option<String>) -> String {
    match text {
        Some(t) => format!("{}: {t}", d.class.spoken_label()),
        None => d.class.name.to_string(),
    }
}

/// Left-to-right readout of every detection.
pub fn scene_sweep(s: &PipelineSnapshot, ctx: &InteractionCtx<'_>) -> Vec<SpatialCue> {
    let tone = s.tone();
    let order = order_sweep(s.detections());
    if order.is_empty() {
        return vec![SpatialCue::centered(speech(NO_OBJECTS_TEXT), tone)];
    }
    let texts = fan_out(&order, ctx.pool.limit(), |e| {
        let d = &e.detection;
        if d.class.is_text_bearing() {
            labelled(d, read_text(s, d, ctx))
        } else {
            d.class.name.to_string()
        }
    });
    order
        .iter()
        .zip(texts)
        .map(|(e, text)| placed(s, &e.detection, speech(text), ctx.spatial, e.order_index))
        .collect()
}

fn detail_for(s: &PipelineSnapshot, d: &Detection, ctx: &InteractionCtx<'_>) -> String {
    if d.class.is_text_bearing() {
        return labelled(d, read_text(s, d, ctx));
    }
    if d.class.category == Category::Interactables {
        let desc = ctx.describe_icon(s, d, d.class.name).ok().filter(|t| !t.is_empty());
        return labelled(d, desc);
    }
    d.class.name.to_string()
}

/// Pointer-proximal detail, or objects touching a hand or controller when
/// no pointer is visible.
pub fn aim_assist(s: &PipelineSnapshot, ctx: &InteractionCtx<'_>) -> Vec<SpatialCue> {
    let tone = s.tone();
    let dets = s.detections();
    let (targets, hand_mode) = match s.pointer() {
        Some(ray) => (near_pointer(dets, ray, ctx.spatial), false),
        None => (near_hands(dets), true),
    };
    if targets.is_empty() {
        return vec![SpatialCue::centered(speech(NOTHING_TO_DESCRIBE_TEXT), tone)];
    }
    let texts = fan_out(&targets, ctx.pool.limit(), |d| {
        if hand_mode {
            let context = format!("{} Object class: {}.", prompts::DETAIL_DESCRIBE, d.class.name);
            let desc = ctx.describe_icon(s, d, &context).ok().filter(|t| !t.is_empty());
            labelled(d, desc)
        } else {
            detail_for(s, d, ctx)
        }
    });
    targets
        .iter()
        .zip(texts)
        .enumerate()
        .map(|(i, (d, text))| placed(s, d, speech(text), ctx.spatial, i as u16))
        .collect()
}

/// Non-hand detections overlapping any hand/controller box, nearest hand
/// first.
pub fn near_hands(dets: &[Detection]) -> Vec<Detection> {
    let hands: Vec<&Detection> = dets.iter().filter(|d| d.class.is_hand_or_controller()).collect();
    let mut hits: Vec<(f64, Detection)> = dets
        .iter()
        .filter(|d| !d.class.is_hand_or_controller())
        .filter_map(|d| {
            let (cx, cy) = d.bbox.center();
            hands
                .iter()
                .filter(|h| h.bbox.intersects(&d.bbox))
                .map(|h| {
                    let (hx, hy) = h.bbox.center();
                    ((hx - cx).powi(2) + (hy - cy).powi(2)).sqrt()
                })
                .min_by(f64::total_cmp)
                .map(|dist| (dist, *d))
        })
        .collect();
    hits.sort_by(|(da, a), (db, b)| {
        da.total_cmp(db)
            .then(crate::perception::detection_order(a, b))
    });
    hits.into_iter().map(|(_, d)| d).collect()
}
