//! Laser-pointer detection by color mask and robust line fit.
//!
//! Pixels passing an HSV acceptance range are fitted with a total least
//! squares line, refitted once without points farther than the inlier
//! tolerance, and the ray is read off the inlier extremes. The extremum
//! nearer the bottom third of the frame is the controller side.

use serde::{Deserialize, Serialize};

use crate::scene::{Frame, PointerRay};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointerColorProfile {
    /// Hue window in degrees; `hue_min > hue_max` wraps through 0.
    pub hue_min: f64,
    pub hue_max: f64,
    pub sat_min: f64,
    pub sat_max: f64,
    pub val_min: f64,
    pub val_max: f64,
    pub min_pixels: usize,
}

impl PointerColorProfile {
    pub fn green() -> Self {
        Self {
            hue_min: 85.0,
            hue_max: 155.0,
            sat_min: 0.4,
            sat_max: 1.0,
            val_min: 0.35,
            val_max: 1.0,
            min_pixels: 50,
        }
    }

    pub fn blue() -> Self {
        Self {
            hue_min: 200.0,
            hue_max: 250.0,
            ..Self::green()
        }
    }

    pub fn accepts(&self, rgb: [u8; 3]) -> bool {
        let (h, s, v) = rgb_to_hsv(rgb);
        let hue_ok = if self.hue_min <= self.hue_max {
            (self.hue_min..=self.hue_max).contains(&h)
        } else {
            h >= self.hue_min || h <= self.hue_max
        };
        hue_ok
            && (self.sat_min..=self.sat_max).contains(&s)
            && (self.val_min..=self.val_max).contains(&v)
    }
}

impl Default for PointerColorProfile {
    fn default() -> Self {
        Self::green()
    }
}

/// Hue in degrees [0, 360), saturation and value in [0, 1].
pub fn rgb_to_hsv([r, g, b]: [u8; 3]) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointerDetector {
    pub profile: PointerColorProfile,
    /// Perpendicular distance, in pixels, counted as on the line.
    pub inlier_tolerance: f64,
    pub min_inlier_fraction: f64,
}

impl PointerDetector {
    pub fn new(profile: PointerColorProfile) -> Self {
        Self {
            profile,
            inlier_tolerance: 2.0,
            min_inlier_fraction: 0.6,
        }
    }

    pub fn detect(&self, frame: &Frame) -> Option<PointerRay> {
        let points = self.mask(frame);
        if points.len() < self.profile.min_pixels.max(2) {
            return None;
        }
        let first = LineFit::fit(&points)?;
        let kept: Vec<(f64, f64)> = points
            .iter()
            .copied()
            .filter(|&p| first.distance(p) <= self.inlier_tolerance)
            .collect();
        let line = if kept.len() >= 2 {
            LineFit::fit(&kept).unwrap_or(first)
        } else {
            first
        };

        let inliers: Vec<(f64, f64)> = points
            .iter()
            .copied()
            .filter(|&p| line.distance(p) <= self.inlier_tolerance)
            .collect();
        let confidence = inliers.len() as f64 / points.len() as f64;
        if confidence < self.min_inlier_fraction || inliers.len() < 2 {
            return None;
        }

        let project = |p: (f64, f64)| line.project(p);
        let lo = inliers
            .iter()
            .copied()
            .min_by(|a, b| project(*a).total_cmp(&project(*b)))?;
        let hi = inliers
            .iter()
            .copied()
            .max_by(|a, b| project(*a).total_cmp(&project(*b)))?;
        let (start, end) = if controller_side_first(lo, hi, frame.height()) {
            (lo, hi)
        } else {
            (hi, lo)
        };
        PointerRay::new(start, end, confidence).ok()
    }

    fn mask(&self, frame: &Frame) -> Vec<(f64, f64)> {
        let w = frame.width() as usize;
        frame
            .pixels()
            .chunks_exact(3)
            .enumerate()
            .filter(|(_, p)| self.profile.accepts([p[0], p[1], p[2]]))
            .map(|(i, _)| ((i % w) as f64, (i / w) as f64))
            .collect()
    }
}

impl Default for PointerDetector {
    fn default() -> Self {
        Self::new(PointerColorProfile::green())
    }
}

pub fn detect_pointer(frame: &Frame, profile: &PointerColorProfile) -> Option<PointerRay> {
    PointerDetector::new(*profile).detect(frame)
}

/// True when `a` should be the ray start: it is nearer the bottom third of
/// the frame than `b`, or equally near and lower.
fn controller_side_first(a: (f64, f64), b: (f64, f64), height: u32) -> bool {
    let band = 2.0 * height as f64 / 3.0;
    let da = (band - a.1).max(0.0);
    let db = (band - b.1).max(0.0);
    if da != db {
        da < db
    } else {
        a.1 >= b.1
    }
}

#[derive(Debug, Clone, Copy)]
struct LineFit {
    cx: f64,
    cy: f64,
    dx: f64,
    dy: f64,
}

impl LineFit {
    /// Orthogonal regression through the centroid along the principal axis.
    fn fit(points: &[(f64, f64)]) -> Option<Self> {
        if points.len() < 2 {
            return None;
        }
        let n = points.len() as f64;
        let (sx, sy) = points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x, sy + y));
        let (cx, cy) = (sx / n, sy / n);
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for &(x, y) in points {
            let (u, v) = (x - cx, y - cy);
            sxx += u * u;
            syy += v * v;
            sxy += u * v;
        }
        if sxx + syy == 0.0 {
            return None;
        }
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        Some(Self {
            cx,
            cy,
            dx: theta.cos(),
            dy: theta.sin(),
        })
    }

    fn distance(&self, (x, y): (f64, f64)) -> f64 {
        ((x - self.cx) * self.dy - (y - self.cy) * self.dx).abs()
    }

    fn project(&self, (x, y): (f64, f64)) -> f64 {
        (x - self.cx) * self.dx + (y - self.cy) * self.dy
    }
}
