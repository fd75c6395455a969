//! Perception backends: object detection, depth estimation and the pointer
//! detector.
//!
//! Model-backed detectors and depth estimators are external processes
//! reached through [`adapter`]; [`fixture`] provides scripted stand-ins that
//! are pure functions of `(scene, seq)`.

pub mod adapter;
pub mod fixture;
pub mod letterbox;
pub mod pointer;

use std::cmp::Ordering;
use std::path::PathBuf;

use thiserror::Error;

use crate::scene::{DepthMap, Detection, Frame};

pub use pointer::{detect_pointer, PointerColorProfile, PointerDetector};

pub const DEFAULT_CONF_THRESHOLD: f32 = 0.25;

/// Side of the square model input.
pub const MODEL_INPUT_SIZE: u32 = 640;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("{path}:{line}: {message}")]
    Script {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub trait DetectorBackend: Send {
    fn conf_threshold(&self) -> f32;

    /// Detections at or above the threshold, clamped to the frame and sorted
    /// by [`detection_order`].
    fn detect(&mut self, frame: &Frame) -> Result<Vec<Detection>, PerceptionError>;
}

pub trait DepthBackend: Send {
    /// A normalized depth map with the frame's dimensions.
    fn estimate_depth(&mut self, frame: &Frame) -> Result<DepthMap, PerceptionError>;
}

impl<T: DetectorBackend + ?Sized> DetectorBackend for Box<T> {
    fn conf_threshold(&self) -> f32 {
        (**self).conf_threshold()
    }

    fn detect(&mut self, frame: &Frame) -> Result<Vec<Detection>, PerceptionError> {
        (**self).detect(frame)
    }
}

impl<T: DepthBackend + ?Sized> DepthBackend for Box<T> {
    fn estimate_depth(&mut self, frame: &Frame) -> Result<DepthMap, PerceptionError> {
        (**self).estimate_depth(frame)
    }
}

/// Descending confidence, then class id, then `x_min`, then the remaining
/// coordinates.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.class.id.cmp(&b.class.id))
        .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
        .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
        .then(a.bbox.x_max.total_cmp(&b.bbox.x_max))
        .then(a.bbox.y_max.total_cmp(&b.bbox.y_max))
}

/// Applies the detector contract to raw backend output.
pub fn finalize_detections(
    raw: impl IntoIterator<Item = Detection>,
    conf_threshold: f32,
    width: u32,
    height: u32,
) -> Vec<Detection> {
    let mut out: Vec<Detection> = raw
        .into_iter()
        .filter(|d| d.confidence >= conf_threshold)
        .map(|mut d| {
            d.bbox = d.bbox.clamp_to(width, height);
            d
        })
        .collect();
    out.sort_by(detection_order);
    out
}

/// Maps raw relative inverse depth (larger = nearer) onto the engine's
/// convention: 0 nearest, 1 farthest, spanning [0, 1] exactly. A constant
/// input maps to 0.5.
pub fn normalize_inverse_depth(raw: &[f32]) -> Vec<f32> {
    let (lo, hi) = raw
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![0.5; raw.len()];
    }
    raw.iter()
        .map(|&v| {
            if v == hi {
                0.0
            } else if v == lo {
                1.0
            } else {
                ((hi - v) / span).clamp(0.0, 1.0)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{BBox, ObjectClass};

    fn det(class: u32, conf: f32, x: f64) -> Detection {
        Detection::new(
            ObjectClass::from_id(class).unwrap(),
            BBox::new(x, 0.0, x + 10.0, 10.0),
            conf,
        )
        .unwrap()
    }

    #[test]
    fn finalize_filters_and_orders() {
        let raw = vec![
            det(3, 0.5, 50.0),
            det(1, 0.10, 0.0),
            det(2, 0.9, 10.0),
            det(1, 0.5, 70.0),
            det(1, 0.5, 20.0),
        ];
        let out = finalize_detections(raw, 0.25, 640, 640);
        let keys: Vec<_> = out
            .iter()
            .map(|d| (d.class.id, d.bbox.x_min as i32))
            .collect();
        assert_eq!(keys, vec![(2, 10), (1, 20), (1, 70), (3, 50)]);
    }

    #[test]
    fn finalize_clamps() {
        let d = Detection::new(
            ObjectClass::from_id(0).unwrap(),
            BBox::new(-10.0, -10.0, 700.0, 50.0),
            0.9,
        )
        .unwrap();
        let out = finalize_detections([d], 0.25, 640, 480);
        assert_eq!(out[0].bbox, BBox::new(0.0, 0.0, 640.0, 50.0));
    }

    #[test]
    fn inverse_depth_normalization_spans_unit_interval() {
        let raw = [3.0, 7.5, 1.25, 4.0, 7.5];
        let n = normalize_inverse_depth(&raw);
        let lo = n.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = n.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        assert_eq!((lo, hi), (0.0, 1.0));
        // Largest inverse depth is nearest.
        assert_eq!(n[1], 0.0);
        assert_eq!(n[2], 1.0);
        assert!(n[0] > n[3]);
        assert_eq!(normalize_inverse_depth(&[2.0, 2.0]), vec![0.5, 0.5]);
    }
}
