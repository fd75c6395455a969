//! Placing detections in audio space: depth sampling, pan and gain laws,
//! left-to-right ordering, sweep scheduling and pointer proximity.
//!
//! Azimuth is linear in the box center's horizontal position across the
//! configured field of view. Gain falls linearly with depth down to a floor,
//! so far objects stay audible. Nothing encodes elevation.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::scene::{BBox, DepthMap, Detection, PointerRay, SceneError, SpatialCue};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialConfig {
    /// Radians.
    pub horizontal_fov: f64,
    pub min_gain: f64,
    pub gain_exponent: f64,
    /// Milliseconds of silence between sweep cues.
    pub sweep_gap: u32,
    /// Pixels.
    pub aim_radius: f64,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self {
            horizontal_fov: 1.745,
            min_gain: 0.15,
            gain_exponent: 1.0,
            sweep_gap: 350,
            aim_radius: 80.0,
        }
    }
}

impl SpatialConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov <= std::f64::consts::PI) {
            return Err(SceneError::OutOfRange {
                field: "horizontal_fov",
                value: self.horizontal_fov,
            });
        }
        if !(0.0..1.0).contains(&self.min_gain) {
            return Err(SceneError::OutOfRange {
                field: "min_gain",
                value: self.min_gain,
            });
        }
        if !(self.gain_exponent > 0.0 && self.gain_exponent.is_finite()) {
            return Err(SceneError::OutOfRange {
                field: "gain_exponent",
                value: self.gain_exponent,
            });
        }
        if !(self.aim_radius >= 0.0 && self.aim_radius.is_finite()) {
            return Err(SceneError::OutOfRange {
                field: "aim_radius",
                value: self.aim_radius,
            });
        }
        Ok(())
    }
}

/// Median depth over the central half-area sub-box of `b`.
///
/// The sub-box shares `b`'s center with sides scaled by `1/sqrt(2)`. A pixel
/// belongs to it when its center `(x + 0.5, y + 0.5)` lies inside. When no
/// pixel center qualifies (point and sliver boxes) the pixel containing the
/// box center is sampled. Even counts average the two middle values.
pub fn sample_depth(dm: &DepthMap, b: &BBox) -> f64 {
    let (w, h) = dm.dimensions();
    let (cx, cy) = b.center();
    let half_w = b.width() / (2.0 * std::f64::consts::SQRT_2);
    let half_h = b.height() / (2.0 * std::f64::consts::SQRT_2);
    let (sx0, sx1) = (cx - half_w, cx + half_w);
    let (sy0, sy1) = (cy - half_h, cy + half_h);

    // Pixel i has center i + 0.5; i + 0.5 >= lo  <=>  i >= ceil(lo - 0.5).
    let first = |lo: f64, n: u32| ((lo - 0.5).ceil().max(0.0) as u64).min(n as u64) as u32;
    let last = |hi: f64, n: u32| {
        let v = (hi - 0.5).floor();
        if v < 0.0 {
            None
        } else {
            Some((v as u64).min(n as u64 - 1) as u32)
        }
    };
    let xs = last(sx1, w).map(|l| (first(sx0, w), l));
    let ys = last(sy1, h).map(|l| (first(sy0, h), l));

    let mut samples = Vec::new();
    if let (Some((x0, x1)), Some((y0, y1))) = (xs, ys) {
        if x0 <= x1 && y0 <= y1 {
            samples.reserve(((x1 - x0 + 1) * (y1 - y0 + 1)) as usize);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    samples.push(dm.at(x, y));
                }
            }
        }
    }
    if samples.is_empty() {
        let px = (cx.floor().max(0.0) as u32).min(w - 1);
        let py = (cy.floor().max(0.0) as u32).min(h - 1);
        return dm.at(px, py) as f64;
    }
    median(&mut samples)
}

fn median(values: &mut [f32]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f32::total_cmp);
    let upper = *upper as f64;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .max_by(f32::total_cmp)
            .expect("non-empty lower half") as f64;
        (lower + upper) / 2.0
    }
}

/// Pan, distance and gain for one object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueGeometry {
    pub azimuth: f64,
    pub distance: f64,
    pub gain: f64,
}

pub fn azimuth_for(cx: f64, frame_width: u32, cfg: &SpatialConfig) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    ((cx / frame_width as f64 - 0.5) * cfg.horizontal_fov).clamp(-half_pi, half_pi)
}

pub fn gain_for(depth: f64, cfg: &SpatialConfig) -> f64 {
    let depth = depth.clamp(0.0, 1.0);
    let g = cfg.min_gain + (1.0 - cfg.min_gain) * (1.0 - depth).powf(cfg.gain_exponent);
    g.clamp(cfg.min_gain, 1.0)
}

pub fn to_spatial(b: &BBox, depth: f64, frame_width: u32, cfg: &SpatialConfig) -> CueGeometry {
    let (cx, _) = b.center();
    let distance = depth.clamp(0.0, 1.0);
    CueGeometry {
        azimuth: azimuth_for(cx, frame_width, cfg),
        distance,
        gain: gain_for(distance, cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepEntry {
    pub order_index: u16,
    pub detection: Detection,
}

fn sweep_order(a: &Detection, b: &Detection) -> Ordering {
    let (ax, ay) = a.bbox.center();
    let (bx, by) = b.bbox.center();
    ax.total_cmp(&bx)
        .then(ay.total_cmp(&by))
        .then(a.class.id.cmp(&b.class.id))
        .then(b.confidence.total_cmp(&a.confidence))
        .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
        .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
        .then(a.bbox.x_max.total_cmp(&b.bbox.x_max))
        .then(a.bbox.y_max.total_cmp(&b.bbox.y_max))
}

/// Left to right by box center, then top to bottom, then class id.
pub fn order_sweep(dets: &[Detection]) -> Vec<SweepEntry> {
    let mut sorted = dets.to_vec();
    sorted.sort_by(sweep_order);
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, detection)| SweepEntry {
            order_index: u16::try_from(i).unwrap_or(u16::MAX),
            detection,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEntry {
    pub start_ms: u32,
    pub duration_ms: u32,
    pub cue: SpatialCue,
}

impl TimelineEntry {
    pub fn end_ms(&self) -> u32 {
        self.start_ms + self.duration_ms
    }
}

/// Back-to-back playback with `sweep_gap` of silence between cues.
pub fn schedule_sweep(
    cues: impl IntoIterator<Item = (SpatialCue, u32)>,
    cfg: &SpatialConfig,
) -> Vec<TimelineEntry> {
    let mut next = 0u32;
    cues.into_iter()
        .map(|(cue, duration_ms)| {
            let entry = TimelineEntry {
                start_ms: next,
                duration_ms,
                cue,
            };
            next = next
                .saturating_add(duration_ms)
                .saturating_add(cfg.sweep_gap);
            entry
        })
        .collect()
}

/// Distance from `p` to the nearest point of `b` (0 inside).
pub fn point_box_distance(p: (f64, f64), b: &BBox) -> f64 {
    let dx = (b.x_min - p.0).max(0.0).max(p.0 - b.x_max);
    let dy = (b.y_min - p.1).max(0.0).max(p.1 - b.y_max);
    (dx * dx + dy * dy).sqrt()
}

/// Detections whose box touches the disc of radius `aim_radius` around the
/// pointer end, nearest center first.
pub fn near_pointer(dets: &[Detection], ray: &PointerRay, cfg: &SpatialConfig) -> Vec<Detection> {
    let center_distance = |d: &Detection| {
        let (cx, cy) = d.bbox.center();
        ((cx - ray.end.0).powi(2) + (cy - ray.end.1).powi(2)).sqrt()
    };
    let mut hits: Vec<(f64, Detection)> = dets
        .iter()
        .filter(|d| point_box_distance(ray.end, &d.bbox) <= cfg.aim_radius)
        .map(|d| (center_distance(d), *d))
        .collect();
    hits.sort_by(|(da, a), (db, b)| da.total_cmp(db).then_with(|| sweep_order(a, b)));
    hits.into_iter().map(|(_, d)| d).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{CuePayload, ObjectClass, SceneTone};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det_at(class: u32, b: BBox) -> Detection {
        Detection {
            class: ObjectClass::from_id(class).unwrap(),
            bbox: b,
            confidence: 0.9,
        }
    }

    fn gradient(w: u32, h: u32) -> DepthMap {
        let mut v = Vec::new();
        for _ in 0..h {
            for x in 0..w {
                v.push(x as f32 / (w - 1) as f32);
            }
        }
        DepthMap::new(v, w, h).unwrap()
    }

    /// Enumerates every pixel and keeps those whose center falls in the
    /// central sub-box.
    fn brute_median(dm: &DepthMap, b: &BBox) -> f64 {
        let (cx, cy) = b.center();
        let hw = b.width() / (2.0 * 2f64.sqrt());
        let hh = b.height() / (2.0 * 2f64.sqrt());
        let mut vals = Vec::new();
        for y in 0..dm.height() {
            for x in 0..dm.width() {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                if px >= cx - hw && px <= cx + hw && py >= cy - hh && py <= cy + hh {
                    vals.push(dm.at(x, y) as f64);
                }
            }
        }
        vals.sort_by(f64::total_cmp);
        let n = vals.len();
        if n % 2 == 1 {
            vals[n / 2]
        } else {
            (vals[n / 2 - 1] + vals[n / 2]) / 2.0
        }
    }

    #[test]
    fn constant_depth_samples_constant() {
        let dm = DepthMap::constant(64, 64, 0.5).unwrap();
        assert_eq!(sample_depth(&dm, &BBox::new(3.0, 4.0, 40.0, 60.0)), 0.5);
    }

    #[test]
    fn left_half_of_gradient_matches_enumeration() {
        let dm = gradient(64, 32);
        let b = BBox::new(0.0, 0.0, 32.0, 32.0);
        let expected = brute_median(&dm, &b);
        assert_eq!(sample_depth(&dm, &b), expected);
        // Central sub-box spans columns 5..=26; median column 15.5 of 63.
        assert_abs_diff_eq!(expected, 15.5 / 63.0, epsilon = 1e-6);
    }

    #[test]
    fn point_sample() {
        let mut v = vec![0.0f32; 32 * 32];
        v[10 * 32 + 10] = 0.75;
        let dm = DepthMap::new(v, 32, 32).unwrap();
        assert_eq!(sample_depth(&dm, &BBox::new(10.0, 10.0, 11.0, 11.0)), 0.75);
        assert_eq!(sample_depth(&dm, &BBox::new(10.0, 10.0, 10.0, 10.0)), 0.75);
        // Point boxes on the far frame edge stay in bounds.
        assert_eq!(sample_depth(&dm, &BBox::new(32.0, 32.0, 32.0, 32.0)), 0.0);
    }

    #[test]
    fn random_boxes_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut v = Vec::new();
        for _ in 0..48 * 40 {
            v.push(rng.gen_range(0.0f32..=1.0));
        }
        let dm = DepthMap::new(v, 48, 40).unwrap();
        for _ in 0..300 {
            let x0 = rng.gen_range(0.0..45.0);
            let y0 = rng.gen_range(0.0..37.0);
            let b = BBox::new(x0, y0, rng.gen_range(x0 + 2.0..=48.0), rng.gen_range(y0 + 2.0..=40.0));
            let got = sample_depth(&dm, &b);
            let want = brute_median(&dm, &b);
            assert!((got - want).abs() < 1e-12, "{b:?}: {got} vs {want}");
        }
    }

    #[test]
    fn spatial_law_examples() {
        let cfg = SpatialConfig::default();
        let c = to_spatial(&BBox::new(300.0, 0.0, 340.0, 10.0), 0.0, 640, &cfg);
        assert_abs_diff_eq!(c.azimuth, 0.0, epsilon = 1e-9);
        assert_eq!(c.gain, 1.0);
        let fov100 = SpatialConfig {
            horizontal_fov: 100f64.to_radians(),
            ..cfg
        };
        let left = to_spatial(&BBox::new(0.0, 0.0, 0.0, 0.0), 0.5, 640, &fov100);
        assert_abs_diff_eq!(left.azimuth, -0.8727, epsilon = 1e-4);
        let far = to_spatial(&BBox::new(0.0, 0.0, 10.0, 10.0), 1.0, 640, &cfg);
        assert_abs_diff_eq!(far.gain, 0.15, epsilon = 1e-12);
    }

    #[test]
    fn sweep_order_examples() {
        let mk = |x: f64| det_at(0, BBox::new(x - 5.0, 0.0, x + 5.0, 10.0));
        let order: Vec<f64> = order_sweep(&[mk(400.0), mk(100.0), mk(250.0)])
            .iter()
            .map(|e| e.detection.bbox.center().0)
            .collect();
        assert_eq!(order, vec![100.0, 250.0, 400.0]);

        let low = det_at(0, BBox::new(0.0, 190.0, 20.0, 210.0));
        let high = det_at(0, BBox::new(0.0, 40.0, 20.0, 60.0));
        let out = order_sweep(&[low, high]);
        assert_eq!(out[0].detection.bbox.center().1, 50.0);
        assert_eq!(out[1].order_index, 1);
    }

    #[test]
    fn schedule_examples() {
        let cfg = SpatialConfig::default();
        let cue = || SpatialCue::centered(CuePayload::Speech("x".into()), SceneTone::Neutral);
        let starts = |d: &[u32]| -> Vec<u32> {
            schedule_sweep(d.iter().map(|&d| (cue(), d)), &cfg)
                .iter()
                .map(|e| e.start_ms)
                .collect()
        };
        assert_eq!(starts(&[1000, 500]), vec![0, 1350]);
        assert!(starts(&[]).is_empty());
        assert_eq!(starts(&[400, 400, 400]), vec![0, 750, 1500]);
    }

    #[test]
    fn near_pointer_examples() {
        let cfg = SpatialConfig::default();
        let ray = PointerRay::new((0.0, 600.0), (300.0, 300.0), 1.0).unwrap();
        let on = det_at(13, BBox::new(290.0, 290.0, 310.0, 310.0));
        let off = det_at(7, BBox::new(381.0, 250.0, 500.0, 350.0));
        let edge = det_at(7, BBox::new(380.0, 250.0, 500.0, 350.0));
        let out = near_pointer(&[off, edge, on], &ray, &cfg);
        assert_eq!(out, vec![on, edge]);
    }

    /// Closest point on the rectangle by scanning a fine grid over its
    /// boundary and interior.
    fn brute_intersects(p: (f64, f64), b: &BBox, r: f64) -> bool {
        let steps = 200;
        for i in 0..=steps {
            for j in 0..=steps {
                let x = b.x_min + b.width() * i as f64 / steps as f64;
                let y = b.y_min + b.height() * j as f64 / steps as f64;
                if (x - p.0).powi(2) + (y - p.1).powi(2) <= r * r {
                    return true;
                }
            }
        }
        false
    }

    #[test]
    fn near_pointer_matches_geometric_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = SpatialConfig::default();
        for _ in 0..40 {
            let dets = crate::testkit::random_detections(&mut rng, 12, 640, 640);
            let end = (rng.gen_range(0.0..640.0), rng.gen_range(0.0..640.0));
            let ray = PointerRay::new((320.0, 639.0), end, 1.0).unwrap();
            let got = near_pointer(&dets, &ray, &cfg);
            for d in &dets {
                let dist = point_box_distance(end, &d.bbox);
                // Skip boxes within grid resolution of the boundary.
                if (dist - cfg.aim_radius).abs() < 1.0 {
                    continue;
                }
                assert_eq!(
                    got.contains(d),
                    brute_intersects(end, &d.bbox, cfg.aim_radius),
                    "{d:?}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn azimuth_strictly_increasing(a in 0.0f64..640.0, b in 0.0f64..640.0) {
            prop_assume!(a < b);
            let cfg = SpatialConfig::default();
            prop_assert!(azimuth_for(a, 640, &cfg) < azimuth_for(b, 640, &cfg));
        }

        #[test]
        fn gain_bounded_and_monotone(d1 in 0.0f64..=1.0, d2 in 0.0f64..=1.0, exp in 0.2f64..4.0) {
            let cfg = SpatialConfig { gain_exponent: exp, ..SpatialConfig::default() };
            let (g1, g2) = (gain_for(d1, &cfg), gain_for(d2, &cfg));
            prop_assert!((cfg.min_gain..=1.0).contains(&g1));
            if d1 <= d2 { prop_assert!(g1 >= g2); }
        }

        #[test]
        fn near_pointer_permutation_invariant(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dets = crate::testkit::random_detections(&mut rng, 10, 640, 640);
            let ray = PointerRay::new((0.0, 0.0), (rng.gen_range(0.0..640.0), rng.gen_range(0.0..640.0)), 1.0).unwrap();
            let cfg = SpatialConfig { aim_radius: 150.0, ..SpatialConfig::default() };
            let mut shuffled = dets.clone();
            shuffled.reverse();
            prop_assert_eq!(near_pointer(&dets, &ray, &cfg), near_pointer(&shuffled, &ray, &cfg));
        }

        #[test]
        fn order_sweep_idempotent(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dets = crate::testkit::random_detections(&mut rng, 20, 640, 640);
            let once: Vec<Detection> = order_sweep(&dets).into_iter().map(|e| e.detection).collect();
            let twice: Vec<Detection> = order_sweep(&once).into_iter().map(|e| e.detection).collect();
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SpatialConfig::default().validate().is_ok());
        let bad = SpatialConfig {
            min_gain: 1.0,
            ..SpatialConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SpatialConfig {
            horizontal_fov: 4.0,
            ..SpatialConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
