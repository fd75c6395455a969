//! Domain types shared by every stage of the engine: frames, boxes, the
//! object-class taxonomy, depth maps, tones and placed cues.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("frame dimensions must be positive, got {width}x{height}")]
    EmptyFrame { width: u32, height: u32 },
    #[error("buffer holds {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f32),
    #[error("depth value {value} at index {index} outside [0, 1]")]
    DepthRange { index: usize, value: f32 },
    #[error("unknown class id {0}")]
    UnknownClass(u32),
    #[error("unknown class name {0:?}")]
    UnknownClassName(String),
    #[error("pointer ray start and end coincide")]
    DegenerateRay,
    #[error("{field} = {value} outside its valid range")]
    OutOfRange { field: &'static str, value: f64 },
}

/// One captured RGB8 image. Pixel storage is shared, so clones are cheap.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    pixels: Arc<[u8]>,
    width: u32,
    height: u32,
    timestamp_ns: u64,
    seq: u64,
}

impl Frame {
    pub fn new(
        pixels: Vec<u8>,
        width: u32,
        height: u32,
        timestamp_ns: u64,
        seq: u64,
    ) -> Result<Self, SceneError> {
        if width == 0 || height == 0 {
            return Err(SceneError::EmptyFrame { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(SceneError::BufferSize {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            pixels: pixels.into(),
            width,
            height,
            timestamp_ns,
            seq,
        })
    }

    /// A frame of one solid color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3], seq: u64) -> Result<Self, SceneError> {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        Self::new(pixels, width, height, 0, seq)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn timestamp_ns(&self) -> u64 {
        self.timestamp_ns
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Same pixels, new stamp.
    pub fn restamped(&self, timestamp_ns: u64, seq: u64) -> Self {
        Self {
            pixels: Arc::clone(&self.pixels),
            width: self.width,
            height: self.height,
            timestamp_ns,
            seq,
        }
    }

    /// Mean luma in [0, 1].
    pub fn mean_brightness(&self) -> f64 {
        let sum: u64 = self
            .pixels
            .chunks_exact(3)
            .map(|p| (299 * p[0] as u64 + 587 * p[1] as u64 + 114 * p[2] as u64) / 1000)
            .sum();
        sum as f64 / (self.width as f64 * self.height as f64 * 255.0)
    }

    /// Copies the pixels covered by `bbox`. The crop is at least one pixel.
    pub fn crop(&self, bbox: &BBox) -> ImageCrop {
        let b = bbox.clamp_to(self.width, self.height);
        let x0 = (b.x_min.floor() as u32).min(self.width - 1);
        let y0 = (b.y_min.floor() as u32).min(self.height - 1);
        let x1 = (b.x_max.ceil() as u32).clamp(x0 + 1, self.width);
        let y1 = (b.y_max.ceil() as u32).clamp(y0 + 1, self.height);
        let (w, h) = (x1 - x0, y1 - y0);
        let mut pixels = Vec::with_capacity(w as usize * h as usize * 3);
        for y in y0..y1 {
            let start = (y as usize * self.width as usize + x0 as usize) * 3;
            pixels.extend_from_slice(&self.pixels[start..start + w as usize * 3]);
        }
        ImageCrop {
            width: w,
            height: h,
            pixels,
        }
    }

    /// The whole frame as a crop.
    pub fn as_crop(&self) -> ImageCrop {
        ImageCrop {
            width: self.width,
            height: self.height,
            pixels: self.pixels.to_vec(),
        }
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("timestamp_ns", &self.timestamp_ns)
            .field("seq", &self.seq)
            .finish_non_exhaustive()
    }
}

/// An owned RGB8 sub-image handed to OCR and description services.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageCrop {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

/// Axis-aligned box in frame pixels, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    /// Builds a box from two opposite corners in any order.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            x_min: x0.min(x1),
            y_min: y0.min(y1),
            x_max: x0.max(x1),
            y_max: y0.max(y1),
        }
    }

    /// Builds a normalized box and clamps it to a `width` x `height` frame.
    pub fn in_frame(x0: f64, y0: f64, x1: f64, y1: f64, width: u32, height: u32) -> Self {
        Self::new(x0, y0, x1, y1).clamp_to(width, height)
    }

    pub fn clamp_to(&self, width: u32, height: u32) -> Self {
        let (w, h) = (width as f64, height as f64);
        Self {
            x_min: self.x_min.clamp(0.0, w),
            y_min: self.y_min.clamp(0.0, h),
            x_max: self.x_max.clamp(0.0, w),
            y_max: self.y_max.clamp(0.0, h),
        }
    }

    pub fn center(&self) -> (f64, f64) {
        bbox_center(self)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.x_min <= other.x_max
            && other.x_min <= self.x_max
            && self.y_min <= other.y_max
            && other.y_min <= self.y_max
    }
}

pub fn bbox_center(b: &BBox) -> (f64, f64) {
    ((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Avatars,
    Informational,
    Interactables,
    Safety,
    SeatingAreas,
    VrSystem,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Avatars => "Avatars",
            Category::Informational => "Informational",
            Category::Interactables => "Interactables",
            Category::Safety => "Safety",
            Category::SeatingAreas => "Seating Areas",
            Category::VrSystem => "VR System",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObjectClass {
    pub id: u8,
    pub name: &'static str,
    pub category: Category,
}

macro_rules! classes {
    ($($id:literal $name:literal $cat:ident;)*) => {
        const TAXONOMY: &[ObjectClass] = &[
            $(ObjectClass { id: $id, name: $name, category: Category::$cat },)*
        ];
    };
}

// Categories top to bottom, classes in descending instance count within each.
classes! {
    0 "avatar" Avatars;
    1 "avatar-nonhuman" Avatars;
    2 "chat bubble" Avatars;
    3 "chat box" Avatars;
    4 "sign-text" Informational;
    5 "ui-text" Informational;
    6 "sign-graphic" Informational;
    7 "menu" Informational;
    8 "ui-graphic" Informational;
    9 "progress bar" Informational;
    10 "hud" Informational;
    11 "indicator-mute" Informational;
    12 "interactable" Interactables;
    13 "button" Interactables;
    14 "target" Interactables;
    15 "portal" Interactables;
    16 "writing utensil" Interactables;
    17 "watch" Interactables;
    18 "writing surface" Interactables;
    19 "spawner" Interactables;
    20 "guardian" Safety;
    21 "out of bounds" Safety;
    22 "seat-single" SeatingAreas;
    23 "table" SeatingAreas;
    24 "seat-multiple" SeatingAreas;
    25 "campfire" SeatingAreas;
    26 "hand" VrSystem;
    27 "controller" VrSystem;
    28 "dashboard" VrSystem;
    29 "locomotion-target" VrSystem;
}

pub const NUM_CLASSES: usize = 30;

/// The 30 detectable classes, ordered by id.
pub fn taxonomy() -> &'static [ObjectClass] {
    TAXONOMY
}

impl ObjectClass {
    pub fn from_id(id: u32) -> Result<Self, SceneError> {
        TAXONOMY
            .get(id as usize)
            .copied()
            .ok_or(SceneError::UnknownClass(id))
    }

    pub fn by_name(name: &str) -> Result<Self, SceneError> {
        TAXONOMY
            .iter()
            .find(|c| c.name == name)
            .copied()
            .ok_or_else(|| SceneError::UnknownClassName(name.to_string()))
    }

    /// Classes whose content is read with OCR.
    pub fn is_text_bearing(&self) -> bool {
        matches!(
            self.name,
            "sign-text" | "ui-text" | "chat box" | "menu" | "sign-graphic" | "ui-graphic"
        )
    }

    /// Picture-like classes; empty OCR falls back to an icon description.
    pub fn is_graphic(&self) -> bool {
        matches!(self.name, "sign-graphic" | "ui-graphic")
    }

    pub fn is_safety(&self) -> bool {
        self.category == Category::Safety
    }

    /// Hands and controllers anchor the pointer-less fallback.
    pub fn is_hand_or_controller(&self) -> bool {
        matches!(self.name, "hand" | "controller")
    }

    /// Short spoken prefix used before recognized text, e.g. `Sign: Exit`.
    pub fn spoken_label(&self) -> &'static str {
        match self.name {
            "sign-text" | "sign-graphic" => "Sign",
            "ui-text" => "Text",
            "ui-graphic" => "Icon",
            "chat box" => "Chat",
            "menu" => "Menu",
            "chat bubble" => "Chat bubble",
            "button" => "Button",
            _ => self.name,
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class: ObjectClass,
    pub bbox: BBox,
    pub confidence: f32,
}

impl Detection {
    pub fn new(class: ObjectClass, bbox: BBox, confidence: f32) -> Result<Self, SceneError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(SceneError::Confidence(confidence));
        }
        Ok(Self {
            class,
            bbox,
            confidence,
        })
    }
}

/// Per-pixel relative depth, 0 = nearest and 1 = farthest.
#[derive(Clone, PartialEq)]
pub struct DepthMap {
    values: Arc<[f32]>,
    width: u32,
    height: u32,
}

impl DepthMap {
    pub fn new(values: Vec<f32>, width: u32, height: u32) -> Result<Self, SceneError> {
        if width == 0 || height == 0 {
            return Err(SceneError::EmptyFrame { width, height });
        }
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(SceneError::BufferSize {
                expected,
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(SceneError::DepthRange { index, value });
        }
        Ok(Self {
            values: values.into(),
            width,
            height,
        })
    }

    pub fn constant(width: u32, height: u32, value: f32) -> Result<Self, SceneError> {
        Self::new(vec![value; width as usize * height as usize], width, height)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn at(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }
}

impl fmt::Debug for DepthMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DepthMap")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(u8)]
pub enum SceneTone {
    #[default]
    Neutral = 0,
    Cheerful = 1,
    Sad = 2,
    Fearful = 3,
    Urgent = 4,
}

impl SceneTone {
    pub const ALL: [SceneTone; 5] = [
        SceneTone::Neutral,
        SceneTone::Cheerful,
        SceneTone::Sad,
        SceneTone::Fearful,
        SceneTone::Urgent,
    ];

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SceneTone::Neutral => "neutral",
            SceneTone::Cheerful => "cheerful",
            SceneTone::Sad => "sad",
            SceneTone::Fearful => "fearful",
            SceneTone::Urgent => "urgent",
        }
    }

    /// Parses a tone name, case-insensitively.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|t| t.name() == s)
    }
}

impl fmt::Display for SceneTone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sound effects bundled with the audio client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EffectId {
    Warning,
    Click,
    SweepTick,
}

impl EffectId {
    pub fn name(self) -> &'static str {
        match self {
            EffectId::Warning => "warning",
            EffectId::Click => "click",
            EffectId::SweepTick => "sweep-tick",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "warning" => Some(EffectId::Warning),
            "click" => Some(EffectId::Click),
            "sweep-tick" => Some(EffectId::SweepTick),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CuePayload {
    Speech(String),
    Effect(EffectId),
}

/// A placed utterance or sound effect.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCue {
    /// Radians in [-pi/2, pi/2], negative = left.
    pub azimuth: f64,
    pub gain: f64,
    pub distance: f64,
    pub payload: CuePayload,
    pub tone: SceneTone,
    pub order_index: u16,
}

impl SpatialCue {
    pub fn new(
        azimuth: f64,
        gain: f64,
        distance: f64,
        payload: CuePayload,
        tone: SceneTone,
        order_index: u16,
    ) -> Result<Self, SceneError> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(-half_pi..=half_pi).contains(&azimuth) {
            return Err(SceneError::OutOfRange {
                field: "azimuth",
                value: azimuth,
            });
        }
        if !(0.0..=1.0).contains(&gain) {
            return Err(SceneError::OutOfRange {
                field: "gain",
                value: gain,
            });
        }
        if !(0.0..=1.0).contains(&distance) {
            return Err(SceneError::OutOfRange {
                field: "distance",
                value: distance,
            });
        }
        Ok(Self {
            azimuth,
            gain,
            distance,
            payload,
            tone,
            order_index,
        })
    }

    /// A full-volume cue straight ahead.
    pub fn centered(payload: CuePayload, tone: SceneTone) -> Self {
        Self {
            azimuth: 0.0,
            gain: 1.0,
            distance: 0.0,
            payload,
            tone,
            order_index: 0,
        }
    }

    pub fn speech_text(&self) -> Option<&str> {
        match &self.payload {
            CuePayload::Speech(t) => Some(t),
            CuePayload::Effect(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointerRay {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub confidence: f64,
}

impl PointerRay {
    pub fn new(start: (f64, f64), end: (f64, f64), confidence: f64) -> Result<Self, SceneError> {
        if start == end {
            return Err(SceneError::DegenerateRay);
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(SceneError::OutOfRange {
                field: "confidence",
                value: confidence,
            });
        }
        Ok(Self {
            start,
            end,
            confidence,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn taxonomy_has_thirty_classes_with_table_counts() {
        let t = taxonomy();
        assert_eq!(t.len(), 30);
        for (i, c) in t.iter().enumerate() {
            assert_eq!(c.id as usize, i);
        }
        let mut counts = BTreeMap::new();
        for c in t {
            *counts.entry(c.category).or_insert(0) += 1;
        }
        assert_eq!(counts[&Category::Avatars], 4);
        assert_eq!(counts[&Category::Informational], 8);
        assert_eq!(counts[&Category::Interactables], 8);
        assert_eq!(counts[&Category::Safety], 2);
        assert_eq!(counts[&Category::SeatingAreas], 4);
        assert_eq!(counts[&Category::VrSystem], 4);
    }

    #[test]
    fn out_of_bounds_is_safety() {
        let c = ObjectClass::by_name("out of bounds").unwrap();
        assert_eq!(c.category, Category::Safety);
        assert_eq!(ObjectClass::from_id(c.id as u32).unwrap(), c);
        assert!(ObjectClass::from_id(30).is_err());
    }

    #[test]
    fn class_names_are_unique() {
        let mut names: Vec<_> = taxonomy().iter().map(|c| c.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 30);
    }

    #[test]
    fn bbox_center_examples() {
        assert_eq!(bbox_center(&BBox::new(0.0, 0.0, 640.0, 640.0)), (320.0, 320.0));
        assert_eq!(bbox_center(&BBox::new(10.0, 20.0, 30.0, 60.0)), (20.0, 40.0));
        assert_eq!(bbox_center(&BBox::new(5.0, 5.0, 5.0, 5.0)), (5.0, 5.0));
    }

    #[test]
    fn bbox_normalizes_and_clamps() {
        let b = BBox::new(30.0, 60.0, 10.0, 20.0);
        assert_eq!(b, BBox::new(10.0, 20.0, 30.0, 60.0));
        let c = BBox::in_frame(-5.0, 700.0, 100.0, 10.0, 640, 640);
        assert_eq!(c, BBox::new(0.0, 10.0, 100.0, 640.0));
    }

    #[test]
    fn frame_validation() {
        assert!(Frame::new(vec![0; 5], 2, 1, 0, 0).is_err());
        assert!(Frame::new(vec![], 0, 1, 0, 0).is_err());
        assert!(Frame::new(vec![0; 6], 2, 1, 0, 0).is_ok());
    }

    #[test]
    fn crop_of_point_box_is_one_pixel() {
        let mut px = vec![0u8; 4 * 4 * 3];
        px[(2 * 4 + 1) * 3] = 200;
        let f = Frame::new(px, 4, 4, 0, 0).unwrap();
        let c = f.crop(&BBox::new(1.0, 2.0, 1.0, 2.0));
        assert_eq!((c.width, c.height), (1, 1));
        assert_eq!(c.pixels, vec![200, 0, 0]);
    }

    #[test]
    fn depth_map_rejects_out_of_range() {
        assert!(DepthMap::new(vec![0.0, 1.1], 2, 1).is_err());
        assert!(DepthMap::new(vec![0.0, 1.0], 2, 1).is_ok());
    }

    #[test]
    fn tone_default_and_parse() {
        assert_eq!(SceneTone::default(), SceneTone::Neutral);
        assert_eq!(SceneTone::parse("Fearful"), Some(SceneTone::Fearful));
        for t in SceneTone::ALL {
            assert_eq!(SceneTone::from_u8(t.as_u8()), Some(t));
        }
        assert_eq!(SceneTone::from_u8(5), None);
    }

    #[test]
    fn pointer_ray_rejects_degenerate() {
        assert!(PointerRay::new((1.0, 1.0), (1.0, 1.0), 1.0).is_err());
    }
}
