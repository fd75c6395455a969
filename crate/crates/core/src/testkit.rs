//! Synthetic scene generation for tests, benches and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scene::{BBox, Detection, Frame, ObjectClass};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpec {
    pub size: u32,
    pub start: (f64, f64),
    pub end: (f64, f64),
    /// Stroke width in pixels.
    pub width: f64,
    pub color: [u8; 3],
    /// Uniform per-channel noise amplitude added to every pixel.
    pub noise: u8,
    pub seed: u64,
}

fn distance_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * vx, a.1 + t * vy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Black square frame with one colored stroke. A pixel is painted when its
/// integer coordinate lies within `width / 2` of the segment.
pub fn render_segment(spec: &SegmentSpec) -> Frame {
    let n = spec.size as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut px = vec![0u8; n * n * 3];
    let half = spec.width / 2.0;
    for y in 0..n {
        for x in 0..n {
            let o = (y * n + x) * 3;
            let on = distance_to_segment((x as f64, y as f64), spec.start, spec.end) <= half;
            for c in 0..3 {
                let base = if on { spec.color[c] as i32 } else { 0 };
                let jitter = if spec.noise > 0 {
                    rng.gen_range(-(spec.noise as i32)..=spec.noise as i32)
                } else {
                    0
                };
                px[o + c] = (base + jitter).clamp(0, 255) as u8;
            }
        }
    }
    Frame::new(px, spec.size, spec.size, 0, 0).expect("well-formed")
}

/// Random detections with integer boxes inside a `width` x `height` frame.
pub fn random_detections(rng: &mut impl Rng, n: usize, width: u32, height: u32) -> Vec<Detection> {
    (0..n)
        .map(|_| {
            let x0 = rng.gen_range(0..width) as f64;
            let y0 = rng.gen_range(0..height) as f64;
            let x1 = (x0 + rng.gen_range(1..=width / 4) as f64).min(width as f64);
            let y1 = (y0 + rng.gen_range(1..=height / 4) as f64).min(height as f64);
            Detection {
                class: ObjectClass::from_id(rng.gen_range(0..30)).expect("valid id"),
                bbox: BBox::new(x0, y0, x1, y1),
                confidence: rng.gen_range(0.25f32..=1.0),
            }
        })
        .collect()
}
