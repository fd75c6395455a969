//! Scripted perception backends.
//!
//! An annotation script is a text file with one record per line:
//!
//! ```text
//! # seq class_id conf x_min y_min x_max y_max
//! 0 22 0.91 40 300 120 420
//! # depth scripts
//! 0 constant 0.5
//! 1 gradient x
//! 2 file depth/seq2.pgm
//! ```
//!
//! `file` paths are relative to the script's directory. PGM samples are
//! divided by the file's maxval.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::scene::{BBox, DepthMap, Detection, Frame, ObjectClass};

use super::{finalize_detections, DepthBackend, DetectorBackend, PerceptionError};

/// One `seq class_id conf x_min y_min x_max y_max` record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub seq: u64,
    pub class_id: u32,
    pub confidence: f32,
    pub x_min: i64,
    pub y_min: i64,
    pub x_max: i64,
    pub y_max: i64,
}

impl DetectionRecord {
    /// Parses the seven whitespace-separated fields.
    pub fn parse(fields: &[&str]) -> Result<Self, String> {
        if fields.len() != 7 {
            return Err(format!("expected 7 fields, found {}", fields.len()));
        }
        let int = |i: usize, name: &str| {
            fields[i]
                .parse::<i64>()
                .map_err(|_| format!("{name}: not an integer: {:?}", fields[i]))
        };
        let seq = fields[0]
            .parse::<u64>()
            .map_err(|_| format!("seq: not an unsigned integer: {:?}", fields[0]))?;
        let class_id = fields[1]
            .parse::<u32>()
            .map_err(|_| format!("class_id: not an unsigned integer: {:?}", fields[1]))?;
        ObjectClass::from_id(class_id).map_err(|e| e.to_string())?;
        let confidence = fields[2]
            .parse::<f32>()
            .map_err(|_| format!("conf: not a number: {:?}", fields[2]))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(format!("conf {confidence} outside [0, 1]"));
        }
        Ok(Self {
            seq,
            class_id,
            confidence,
            x_min: int(3, "x_min")?,
            y_min: int(4, "y_min")?,
            x_max: int(5, "x_max")?,
            y_max: int(6, "y_max")?,
        })
    }

    pub fn to_detection(&self) -> Detection {
        Detection {
            class: ObjectClass::from_id(self.class_id).expect("validated on parse"),
            bbox: BBox::new(
                self.x_min as f64,
                self.y_min as f64,
                self.x_max as f64,
                self.y_max as f64,
            ),
            confidence: self.confidence,
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {} {} {}",
            self.seq,
            self.class_id,
            self.confidence,
            self.x_min,
            self.y_min,
            self.x_max,
            self.y_max
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DepthScript {
    Constant(f32),
    /// value = coordinate / (extent - 1) along the axis.
    Gradient(Axis),
    /// Normalized samples loaded from a PGM.
    Samples {
        width: u32,
        height: u32,
        values: Arc<[f32]>,
    },
}

impl DepthScript {
    pub fn render(&self, width: u32, height: u32) -> DepthMap {
        let n = width as usize * height as usize;
        let values = match self {
            DepthScript::Constant(v) => vec![*v; n],
            DepthScript::Gradient(axis) => {
                let mut out = Vec::with_capacity(n);
                for y in 0..height {
                    for x in 0..width {
                        let (c, extent) = match axis {
                            Axis::X => (x, width),
                            Axis::Y => (y, height),
                        };
                        out.push(if extent > 1 {
                            c as f32 / (extent - 1) as f32
                        } else {
                            0.0
                        });
                    }
                }
                out
            }
            DepthScript::Samples {
                width: sw,
                height: sh,
                values,
            } => {
                // Nearest-neighbour resample onto the frame grid.
                let mut out = Vec::with_capacity(n);
                for y in 0..height {
                    let sy = (y as u64 * *sh as u64 / height as u64) as usize;
                    for x in 0..width {
                        let sx = (x as u64 * *sw as u64 / width as u64) as usize;
                        out.push(values[sy * *sw as usize + sx]);
                    }
                }
                out
            }
        };
        DepthMap::new(values, width, height).expect("scripted depth is validated on parse")
    }
}

/// Parsed annotation script.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureScript {
    detections: BTreeMap<u64, Vec<DetectionRecord>>,
    depth: BTreeMap<u64, DepthScript>,
}

impl FixtureScript {
    pub fn load(path: &Path) -> Result<Self, PerceptionError> {
        let text = std::fs::read_to_string(path).map_err(|source| PerceptionError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, path)
    }

    /// Parses script text; `base` resolves relative PGM paths and `origin`
    /// labels diagnostics.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self, PerceptionError> {
        let mut script = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| PerceptionError::Script {
                path: origin.to_path_buf(),
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.get(1).copied() {
                Some("constant") | Some("gradient") | Some("file") => {
                    let seq = fields[0]
                        .parse::<u64>()
                        .map_err(|_| err(format!("seq: not an unsigned integer: {:?}", fields[0])))?;
                    if fields.len() != 3 {
                        return Err(err(format!(
                            "depth script expects 3 fields, found {}",
                            fields.len()
                        )));
                    }
                    let d = parse_depth(fields[1], fields[2], base).map_err(err)?;
                    if script.depth.insert(seq, d).is_some() {
                        return Err(err(format!("duplicate depth script for seq {seq}")));
                    }
                }
                _ => {
                    let rec = DetectionRecord::parse(&fields).map_err(err)?;
                    script.detections.entry(rec.seq).or_default().push(rec);
                }
            }
        }
        Ok(script)
    }

    pub fn push_detection(&mut self, rec: DetectionRecord) {
        self.detections.entry(rec.seq).or_default().push(rec);
    }

    pub fn set_depth(&mut self, seq: u64, script: DepthScript) {
        self.depth.insert(seq, script);
    }

    pub fn detections_for(&self, seq: u64) -> &[DetectionRecord] {
        self.detections.get(&seq).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn depth_for(&self, seq: u64) -> Option<&DepthScript> {
        self.depth.get(&seq)
    }

    /// Highest seq mentioned by any record.
    pub fn max_seq(&self) -> Option<u64> {
        let a = self.detections.keys().next_back().copied();
        let b = self.depth.keys().next_back().copied();
        a.max(b)
    }
}

fn parse_depth(kind: &str, arg: &str, base: &Path) -> Result<DepthScript, String> {
    match kind {
        "constant" => {
            let v: f32 = arg
                .parse()
                .map_err(|_| format!("constant: not a number: {arg:?}"))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("constant depth {v} outside [0, 1]"));
            }
            Ok(DepthScript::Constant(v))
        }
        "gradient" => match arg {
            "x" | "horizontal" => Ok(DepthScript::Gradient(Axis::X)),
            "y" | "vertical" => Ok(DepthScript::Gradient(Axis::Y)),
            other => Err(format!("gradient axis must be x or y, got {other:?}")),
        },
        "file" => {
            let path = base.join(arg);
            let (width, height, values) = read_pgm(&path)?;
            Ok(DepthScript::Samples {
                width,
                height,
                values: values.into(),
            })
        }
        other => Err(format!("unknown depth script kind {other:?}")),
    }
}

/// Reads a grayscale PNM as samples in [0, 1].
pub fn read_pgm(path: &Path) -> Result<(u32, u32, Vec<f32>), String> {
    let img = image::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let max = match img.color() {
        image::ColorType::L16 => u16::MAX as f32,
        _ => u8::MAX as f32,
    };
    let (w, h) = (img.width(), img.height());
    let values = match img {
        image::DynamicImage::ImageLuma16(buf) => {
            buf.into_raw().into_iter().map(|v| v as f32 / max).collect()
        }
        other => other
            .into_luma8()
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / max)
            .collect(),
    };
    Ok((w, h, values))
}

/// A named scene with its annotation script.
#[derive(Debug, Clone)]
pub struct FixtureScene {
    pub name: String,
    pub script: Arc<FixtureScript>,
}

impl FixtureScene {
    pub fn new(name: impl Into<String>, script: FixtureScript) -> Self {
        Self {
            name: name.into(),
            script: Arc::new(script),
        }
    }

    /// Loads `path`, naming the scene after the file stem.
    pub fn load(path: &Path) -> Result<Self, PerceptionError> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self::new(name, FixtureScript::load(path)?))
    }

    pub fn detector(&self, conf_threshold: f32) -> FixtureDetector {
        FixtureDetector {
            script: Arc::clone(&self.script),
            conf_threshold,
        }
    }

    pub fn depth(&self) -> FixtureDepth {
        FixtureDepth {
            script: Arc::clone(&self.script),
            default_depth: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixtureDetector {
    script: Arc<FixtureScript>,
    conf_threshold: f32,
}

impl DetectorBackend for FixtureDetector {
    fn conf_threshold(&self) -> f32 {
        self.conf_threshold
    }

    fn detect(&mut self, frame: &Frame) -> Result<Vec<Detection>, PerceptionError> {
        let raw = self
            .script
            .detections_for(frame.seq())
            .iter()
            .map(DetectionRecord::to_detection);
        Ok(finalize_detections(
            raw,
            self.conf_threshold,
            frame.width(),
            frame.height(),
        ))
    }
}

/// Seqs without a depth script get a constant mid-distance map.
#[derive(Debug, Clone)]
pub struct FixtureDepth {
    script: Arc<FixtureScript>,
    default_depth: f32,
}

impl DepthBackend for FixtureDepth {
    fn estimate_depth(&mut self, frame: &Frame) -> Result<DepthMap, PerceptionError> {
        let (w, h) = frame.dimensions();
        Ok(match self.script.depth_for(frame.seq()) {
            Some(d) => d.render(w, h),
            None => DepthScript::Constant(self.default_depth).render(w, h),
        })
    }
}
