//! Audio scene-reader engine: turns mirrored headset video into spatially
//! placed, tone-aware audio cues.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`scene`]: shared domain types and the 30-class taxonomy.
//! - [`perception`]: detector, depth and pointer backends.
//! - [`spatial`]: pan/gain laws, sweep ordering and scheduling.
//! - [`services`]: OCR, multimodal LLM and TTS clients with caching.
//! - [`orchestrator`]: latest-wins channels, interactions and latency ledgers.
//! - [`transport`]: the binary websocket packet protocol.
//! - [`eval`]: IoU/AP/mAP scoring, dataset splits, augmentation, benchmarks.

pub mod clock;
pub mod eval;
pub mod orchestrator;
pub mod perception;
pub mod scene;
pub mod services;
pub mod spatial;
pub mod testkit;
pub mod transport;

pub use scene::{
    bbox_center, taxonomy, BBox, Category, CuePayload, DepthMap, Detection, EffectId, Frame,
    ObjectClass, PointerRay, SceneTone, SpatialCue,
};
