//! Seeded affine augmentation of labelled frames.
//!
//! Each copy applies `T(c) * Scale(1+m) * Shear * Rot * Flip * T(-c)` about
//! the frame center `c`. Pixels are inverse-mapped with nearest sampling and
//! filled with gray where the source falls outside the frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{BBox, Frame, ObjectClass};

/// Fill value for pixels mapped from outside the source frame.
pub const FILL: u8 = 114;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSpec {
    /// Augmented copies produced per source image.
    pub count: usize,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// Upper bound of the rotation draw, degrees in `[0, 360]`.
    pub max_rotation_deg: f64,
    /// Magnification drawn from `[0, max_magnification]`, at most 0.20.
    pub max_magnification: f64,
    /// Shear drawn from `[-max, max]` degrees, at most 15.
    pub max_shear_deg: f64,
    pub shear_horizontal: bool,
    pub shear_vertical: bool,
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            count: 3,
            flip_horizontal: true,
            flip_vertical: true,
            max_rotation_deg: 360.0,
            max_magnification: 0.20,
            max_shear_deg: 15.0,
            shear_horizontal: true,
            shear_vertical: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("{field} = {value} outside [0, {max}]")]
    Range {
        field: &'static str,
        value: f64,
        max: f64,
    },
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        for (field, value, max) in [
            ("max_rotation_deg", self.max_rotation_deg, 360.0),
            ("max_magnification", self.max_magnification, 0.20),
            ("max_shear_deg", self.max_shear_deg, 15.0),
        ] {
            if !(0.0..=max).contains(&value) {
                return Err(AugmentError::Range { field, value, max });
            }
        }
        Ok(())
    }

    /// Draws one parameter set. Every field consumes the same number of
    /// draws whatever the spec enables, so toggling one option leaves the
    /// others' sequence unchanged.
    pub fn draw(&self, rng: &mut impl Rng) -> AffineParams {
        let fh: bool = rng.gen();
        let fv: bool = rng.gen();
        let rot: f64 = rng.gen();
        let mag: f64 = rng.gen();
        let sx: f64 = rng.gen_range(-1.0..=1.0);
        let sy: f64 = rng.gen_range(-1.0..=1.0);
        AffineParams {
            flip_horizontal: self.flip_horizontal && fh,
            flip_vertical: self.flip_vertical && fv,
            rotation_deg: (rot * self.max_rotation_deg) % 360.0,
            magnification: mag * self.max_magnification,
            shear_x_deg: if self.shear_horizontal { sx * self.max_shear_deg } else { 0.0 },
            shear_y_deg: if self.shear_vertical { sy * self.max_shear_deg } else { 0.0 },
        }
    }

    /// The parameter sets for one source image, keyed by its position in the
    /// training list so results do not depend on processing order.
    pub fn draws_for(&self, image_index: u64) -> Vec<AffineParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(image_index);
        (0..self.count).map(|_| self.draw(&mut rng)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineParams {
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    pub rotation_deg: f64,
    pub magnification: f64,
    pub shear_x_deg: f64,
    pub shear_y_deg: f64,
}

impl AffineParams {
    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }
}

/// Row-major 2x3 affine matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine([f64; 6]);

impl Affine {
    const IDENTITY: Affine = Affine([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    fn linear(a: f64, b: f64, c: f64, d: f64) -> Self {
        Affine([a, b, 0.0, c, d, 0.0])
    }

    fn translate(tx: f64, ty: f64) -> Self {
        Affine([1.0, 0.0, tx, 0.0, 1.0, ty])
    }

    /// `self * rhs`: applies `rhs` first.
    fn compose(&self, rhs: &Affine) -> Affine {
        let [a, b, c, d, e, f] = self.0;
        let [g, h, i, j, k, l] = rhs.0;
        Affine([
            a * g + b * j,
            a * h + b * k,
            a * i + b * l + c,
            d * g + e * j,
            d * h + e * k,
            d * i + e * l + f,
        ])
    }

    pub fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let [a, b, c, d, e, f] = self.0;
        (a * x + b * y + c, d * x + e * y + f)
    }

    pub fn inverse(&self) -> Option<Affine> {
        let [a, b, c, d, e, f] = self.0;
        let det = a * e - b * d;
        if det.abs() < 1e-12 {
            return None;
        }
        let (ia, ib, id, ie) = (e / det, -b / det, -d / det, a / det);
        Some(Affine([ia, ib, -(ia * c + ib * f), id, ie, -(id * c + ie * f)]))
    }

    /// The forward map for `p` on a `width` x `height` frame.
    pub fn for_params(p: &AffineParams, width: u32, height: u32) -> Affine {
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        let flip = Affine::linear(
            if p.flip_horizontal { -1.0 } else { 1.0 },
            0.0,
            0.0,
            if p.flip_vertical { -1.0 } else { 1.0 },
        );
        let (s, c) = p.rotation_deg.to_radians().sin_cos();
        let rot = Affine::linear(c, -s, s, c);
        let shear = Affine::linear(
            1.0,
            p.shear_x_deg.to_radians().tan(),
            p.shear_y_deg.to_radians().tan(),
            1.0,
        );
        let k = 1.0 + p.magnification;
        let scale = Affine::linear(k, 0.0, 0.0, k);
        [Affine::translate(cx, cy), scale, shear, rot, flip, Affine::translate(-cx, -cy)]
            .iter()
            .fold(Affine::IDENTITY, |acc, m| acc.compose(m))
    }
}

/// Axis-aligned hull of the four mapped corners, clipped to the frame, or
/// `None` when nothing of it remains inside.
pub fn map_box(m: &Affine, b: &BBox, width: u32, height: u32) -> Option<BBox> {
    let corners = [
        (b.x_min, b.y_min),
        (b.x_max, b.y_min),
        (b.x_min, b.y_max),
        (b.x_max, b.y_max),
    ]
    .map(|p| m.apply(p));
    let xs = corners.map(|p| p.0);
    let ys = corners.map(|p| p.1);
    let fold = |v: [f64; 4], f: fn(f64, f64) -> f64| v.into_iter().reduce(f).unwrap_or(0.0);
    let hull = BBox::new(fold(xs, f64::min), fold(ys, f64::min), fold(xs, f64::max), fold(ys, f64::max));
    let (w, h) = (width as f64, height as f64);
    if hull.x_max <= 0.0 || hull.x_min >= w || hull.y_max <= 0.0 || hull.y_min >= h {
        return None;
    }
    Some(hull.clamp_to(width, height))
}

/// Applies one parameter set to a frame and its boxes.
pub fn augment(
    frame: &Frame,
    boxes: &[(ObjectClass, BBox)],
    params: &AffineParams,
) -> (Frame, Vec<(ObjectClass, BBox)>) {
    if params.is_identity() {
        return (frame.clone(), boxes.to_vec());
    }
    let (w, h) = frame.dimensions();
    let fwd = Affine::for_params(params, w, h);
    let Some(inv) = fwd.inverse() else {
        return (frame.clone(), boxes.to_vec());
    };
    let src = frame.pixels();
    let mut out = vec![FILL; src.len()];
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inv.apply((x as f64 + 0.5, y as f64 + 0.5));
            let (fx, fy) = (sx.floor(), sy.floor());
            if fx < 0.0 || fy < 0.0 || fx >= w as f64 || fy >= h as f64 {
                continue;
            }
            let s = (fy as usize * w as usize + fx as usize) * 3;
            let d = (y as usize * w as usize + x as usize) * 3;
            out[d..d + 3].copy_from_slice(&src[s..s + 3]);
        }
    }
    let image = Frame::new(out, w, h, frame.timestamp_ns(), frame.seq())
        .expect("same dimensions as the source frame");
    let mapped = boxes
        .iter()
        .filter_map(|(c, b)| map_box(&fwd, b, w, h).map(|b| (*c, b)))
        .collect();
    (image, mapped)
}

/// All augmented copies of one training image.
pub fn augment_copies(
    spec: &AugmentationSpec,
    image_index: u64,
    frame: &Frame,
    boxes: &[(ObjectClass, BBox)],
) -> Result<Vec<(Frame, Vec<(ObjectClass, BBox)>)>, AugmentError> {
    spec.validate()?;
    Ok(spec
        .draws_for(image_index)
        .iter()
        .map(|p| augment(frame, boxes, p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::random_detections;
    use proptest::prelude::*;

    fn class() -> ObjectClass {
        ObjectClass::from_id(0).unwrap()
    }

    fn gradient(w: u32, h: u32) -> Frame {
        let mut px = Vec::new();
        for y in 0..h {
            for x in 0..w {
                px.extend_from_slice(&[(x % 251) as u8, (y % 241) as u8, ((x * 7 + y) % 256) as u8]);
            }
        }
        Frame::new(px, w, h, 5, 9).unwrap()
    }

    /// Closed-form corner map written out term by term.
    fn oracle_point(p: &AffineParams, w: f64, h: f64, (x, y): (f64, f64)) -> (f64, f64) {
        let (mut u, mut v) = (x - w / 2.0, y - h / 2.0);
        if p.flip_horizontal {
            u = -u;
        }
        if p.flip_vertical {
            v = -v;
        }
        let t = p.rotation_deg * std::f64::consts::PI / 180.0;
        let (ru, rv) = (u * t.cos() - v * t.sin(), u * t.sin() + v * t.cos());
        let kx = (p.shear_x_deg * std::f64::consts::PI / 180.0).tan();
        let ky = (p.shear_y_deg * std::f64::consts::PI / 180.0).tan();
        let (su, sv) = (ru + kx * rv, ky * ru + rv);
        let k = 1.0 + p.magnification;
        (su * k + w / 2.0, sv * k + h / 2.0)
    }

    fn oracle_box(p: &AffineParams, w: u32, h: u32, b: &BBox) -> Option<BBox> {
        let (fw, fh) = (w as f64, h as f64);
        let pts: Vec<(f64, f64)> = [(b.x_min, b.y_min), (b.x_max, b.y_min), (b.x_min, b.y_max), (b.x_max, b.y_max)]
            .iter()
            .map(|c| oracle_point(p, fw, fh, *c))
            .collect();
        let x0 = pts.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
        let x1 = pts.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
        let y0 = pts.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
        let y1 = pts.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
        if x1 <= 0.0 || x0 >= fw || y1 <= 0.0 || y0 >= fh {
            return None;
        }
        Some(BBox::new(x0.max(0.0), y0.max(0.0), x1.min(fw), y1.min(fh)))
    }

    #[test]
    fn horizontal_flip_reflects_boxes() {
        let p = AffineParams {
            flip_horizontal: true,
            ..AffineParams::default()
        };
        let m = Affine::for_params(&p, 640, 480);
        let b = map_box(&m, &BBox::new(10.0, 20.0, 30.0, 40.0), 640, 480).unwrap();
        for (got, want) in [(b.x_min, 610.0), (b.y_min, 20.0), (b.x_max, 630.0), (b.y_max, 40.0)] {
            assert!((got - want).abs() < 1e-9, "{b:?}");
        }
        let f = gradient(8, 4);
        let (g, _) = augment(&f, &[], &p);
        for y in 0..4 {
            for x in 0..8 {
                assert_eq!(g.pixel(x, y), f.pixel(7 - x, y));
            }
        }
    }

    #[test]
    fn identity_params_change_nothing() {
        let f = gradient(33, 17);
        let boxes = vec![(class(), BBox::new(1.5, 2.0, 20.0, 16.0))];
        let (g, b) = augment(&f, &boxes, &AffineParams::default());
        assert_eq!(g, f);
        assert_eq!(b, boxes);
        // The general path is exact for the identity as well.
        let m = Affine::for_params(&AffineParams::default(), 33, 17);
        assert_eq!(map_box(&m, &boxes[0].1, 33, 17), Some(boxes[0].1));
    }

    #[test]
    fn boxes_pushed_outside_are_dropped() {
        let p = AffineParams {
            magnification: 0.2,
            ..AffineParams::default()
        };
        // A corner sliver moves off-frame under magnification about the center.
        let corner = BBox::new(0.0, 0.0, 1.0, 1.0);
        assert!(map_box(&Affine::for_params(&p, 100, 100), &corner, 100, 100).is_none());
    }

    #[test]
    fn out_of_frame_pixels_are_filled() {
        let p = AffineParams {
            rotation_deg: 45.0,
            ..AffineParams::default()
        };
        let (g, _) = augment(&gradient(40, 40), &[], &p);
        assert_eq!(g.pixel(0, 0), [FILL; 3]);
    }

    #[test]
    fn draws_respect_ranges_and_seed() {
        let spec = AugmentationSpec {
            seed: 11,
            ..AugmentationSpec::default()
        };
        let a = spec.draws_for(4);
        assert_eq!(a.len(), 3);
        assert_eq!(a, spec.draws_for(4));
        assert_ne!(a, spec.draws_for(5));
        for p in &a {
            assert!((0.0..360.0).contains(&p.rotation_deg));
            assert!((0.0..=0.2).contains(&p.magnification));
            assert!(p.shear_x_deg.abs() <= 15.0 && p.shear_y_deg.abs() <= 15.0);
        }
        let bad = AugmentationSpec {
            max_shear_deg: 20.0,
            ..AugmentationSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn box_mapping_matches_corner_oracle(seed: u64, idx in 0u64..1000) {
            let spec = AugmentationSpec { seed, count: 1, ..AugmentationSpec::default() };
            let p = spec.draws_for(idx)[0];
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ idx);
            let m = Affine::for_params(&p, 640, 480);
            for d in random_detections(&mut rng, 4, 640, 480) {
                let got = map_box(&m, &d.bbox, 640, 480);
                let want = oracle_box(&p, 640, 480, &d.bbox);
                match (got, want) {
                    (Some(g), Some(o)) => {
                        for (a, b) in [(g.x_min, o.x_min), (g.y_min, o.y_min), (g.x_max, o.x_max), (g.y_max, o.y_max)] {
                            prop_assert!((a - b).abs() <= 1.0, "{:?} vs {:?}", g, o);
                        }
                    }
                    (None, None) => {}
                    (g, o) => prop_assert!(false, "{:?} vs {:?}", g, o),
                }
            }
        }
    }
}
