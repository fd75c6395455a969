//! Out-of-process model backends.
//!
//! The engine writes each frame to the adapter's stdin as a header line
//! `FRAME <seq> <width> <height>` followed by `width * height * 3` raw RGB
//! bytes, already letterboxed to the model input size. The adapter answers
//! on stdout:
//!
//! ```text
//! FRAME <seq>
//! <seq> <class_id> <conf> <x_min> <y_min> <x_max> <y_max>   (detectors)
//! <seq> file <path-to-PGM>                                  (depth)
//! END <seq>
//! ```
//!
//! Coordinates and depth samples are in model-input space; the engine maps
//! them back to the source frame. Depth samples are relative inverse depth
//! (larger = nearer) and are normalized on receipt.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use crate::scene::{BBox, DepthMap, Detection, Frame};

use super::fixture::{DepthScript, DetectionRecord, FixtureScript};
use super::letterbox::Letterbox;
use super::{
    finalize_detections, normalize_inverse_depth, DepthBackend, DetectorBackend, PerceptionError,
    MODEL_INPUT_SIZE,
};

pub const DEFAULT_ADAPTER_TIMEOUT: Duration = Duration::from_secs(5);

pub struct AdapterProcess {
    command: String,
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    timeout: Duration,
}

impl AdapterProcess {
    /// Spawns `program args...` with piped stdio.
    pub fn spawn(argv: &[String], timeout: Duration) -> Result<Self, PerceptionError> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| PerceptionError::BackendUnavailable("empty adapter command".into()))?;
        let command = argv.join(" ");
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| PerceptionError::BackendUnavailable(format!("{command}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::Builder::new()
            .name("adapter-reader".into())
            .spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    match line {
                        Ok(l) => {
                            if tx.send(l).is_err() {
                                break;
                            }
                        }
                        Err(_) => break,
                    }
                }
            })
            .map_err(|e| PerceptionError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            command,
            child,
            stdin,
            lines: rx,
            timeout,
        })
    }

    fn unavailable(&self, what: impl std::fmt::Display) -> PerceptionError {
        PerceptionError::BackendUnavailable(format!("{}: {what}", self.command))
    }

    /// Sends one frame and returns the record lines of its reply.
    pub fn exchange(&mut self, frame: &Frame) -> Result<Vec<String>, PerceptionError> {
        let header = format!("FRAME {} {} {}\n", frame.seq(), frame.width(), frame.height());
        self.stdin
            .write_all(header.as_bytes())
            .and_then(|_| self.stdin.write_all(frame.pixels()))
            .and_then(|_| self.stdin.flush())
            .map_err(|e| self.unavailable(e))?;

        let open = format!("FRAME {}", frame.seq());
        let close = format!("END {}", frame.seq());
        let deadline = Instant::now() + self.timeout;
        let mut inside = false;
        let mut records = Vec::new();
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(left) {
                Ok(l) => l,
                Err(RecvTimeoutError::Timeout) => return Err(self.unavailable("reply timed out")),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(self.unavailable("adapter exited"))
                }
            };
            let line = line.trim();
            if !inside {
                inside = line == open;
            } else if line == close {
                return Ok(records);
            } else if !line.is_empty() && !line.starts_with('#') {
                records.push(line.to_string());
            }
        }
    }
}

impl Drop for AdapterProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct AdapterDetector {
    process: AdapterProcess,
    conf_threshold: f32,
    input_size: u32,
}

impl AdapterDetector {
    pub fn spawn(argv: &[String], conf_threshold: f32) -> Result<Self, PerceptionError> {
        Ok(Self {
            process: AdapterProcess::spawn(argv, DEFAULT_ADAPTER_TIMEOUT)?,
            conf_threshold,
            input_size: MODEL_INPUT_SIZE,
        })
    }

    pub fn with_input_size(mut self, size: u32) -> Self {
        self.input_size = size;
        self
    }
}

impl DetectorBackend for AdapterDetector {
    fn conf_threshold(&self) -> f32 {
        self.conf_threshold
    }

    fn detect(&mut self, frame: &Frame) -> Result<Vec<Detection>, PerceptionError> {
        let lb = Letterbox::fit(frame.width(), frame.height(), self.input_size);
        let lines = self.process.exchange(&lb.apply(frame))?;
        let mut raw = Vec::with_capacity(lines.len());
        for line in &lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let rec = DetectionRecord::parse(&fields)
                .map_err(|e| self.process.unavailable(format!("bad record {line:?}: {e}")))?;
            let mut det = rec.to_detection();
            det.bbox = lb.box_to_source(&BBox::new(
                rec.x_min as f64,
                rec.y_min as f64,
                rec.x_max as f64,
                rec.y_max as f64,
            ));
            raw.push(det);
        }
        Ok(finalize_detections(
            raw,
            self.conf_threshold,
            frame.width(),
            frame.height(),
        ))
    }
}

pub struct AdapterDepth {
    process: AdapterProcess,
    input_size: u32,
}

impl AdapterDepth {
    pub fn spawn(argv: &[String]) -> Result<Self, PerceptionError> {
        Ok(Self {
            process: AdapterProcess::spawn(argv, DEFAULT_ADAPTER_TIMEOUT)?,
            input_size: MODEL_INPUT_SIZE,
        })
    }
}

impl DepthBackend for AdapterDepth {
    fn estimate_depth(&mut self, frame: &Frame) -> Result<DepthMap, PerceptionError> {
        let lb = Letterbox::fit(frame.width(), frame.height(), self.input_size);
        let lines = self.process.exchange(&lb.apply(frame))?;
        let text = lines.join("\n");
        let script = FixtureScript::parse(&text, Path::new("."), Path::new("<adapter>"))
            .map_err(|e| self.process.unavailable(e))?;
        let model = script
            .depth_for(frame.seq())
            .ok_or_else(|| self.process.unavailable("reply carries no depth record"))?;
        let raw = sample_raw_depth(model, &lb);
        let normalized = normalize_inverse_depth(&raw);
        DepthMap::new(normalized, frame.width(), frame.height())
            .map_err(|e| self.process.unavailable(e))
    }
}

/// Raw model-space samples pulled back onto the source grid.
fn sample_raw_depth(script: &DepthScript, lb: &Letterbox) -> Vec<f32> {
    let model = match script {
        DepthScript::Samples { width, height, .. } => script.render(*width, *height),
        _ => script.render(lb.size, lb.size),
    };
    let (mw, mh) = model.dimensions();
    let mut out = Vec::with_capacity(lb.src_width as usize * lb.src_height as usize);
    for y in 0..lb.src_height {
        for x in 0..lb.src_width {
            let (mx, my) = lb.to_model(x as f64 + 0.5, y as f64 + 0.5);
            // Model grid may differ from the letterbox size if the adapter
            // wrote a smaller map.
            let sx = ((mx / lb.size as f64) * mw as f64).floor().clamp(0.0, mw as f64 - 1.0);
            let sy = ((my / lb.size as f64) * mh as f64).floor().clamp(0.0, mh as f64 - 1.0);
            out.push(model.at(sx as u32, sy as u32));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    const DETECTOR: &str = r#"
while read -r tag seq w h; do
  head -c $((w * h * 3)) > /dev/null
  echo "FRAME $seq"
  echo "$seq 13 0.9 100 240 300 340"
  echo "$seq 20 0.1 0 0 10 10"
  echo "END $seq"
done
"#;

    #[test]
    fn detector_maps_boxes_back_to_source() {
        let mut det = AdapterDetector::spawn(&sh(DETECTOR), 0.25).unwrap();
        let frame = Frame::filled(1280, 720, [0, 0, 0], 7).unwrap();
        let out = det.detect(&frame).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].class.name, "button");
        assert_eq!(out[0].bbox, BBox::new(200.0, 200.0, 600.0, 400.0));
        // A second frame reuses the same process.
        let out = det.detect(&frame.restamped(0, 8)).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn dead_adapter_is_unavailable() {
        let mut det = AdapterDetector::spawn(&sh("exit 0"), 0.25).unwrap();
        let frame = Frame::filled(640, 640, [0, 0, 0], 0).unwrap();
        assert!(matches!(
            det.detect(&frame),
            Err(PerceptionError::BackendUnavailable(_))
        ));
    }

    #[test]
    fn missing_program_is_unavailable() {
        assert!(matches!(
            AdapterDetector::spawn(&["/nonexistent/adapter".into()], 0.25),
            Err(PerceptionError::BackendUnavailable(_))
        ));
    }

    #[test]
    fn depth_output_normalized_to_unit_range() {
        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("inv.pgm");
        // 4x4 raw inverse depth with values 40..=190.
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend((0..16u8).map(|i| 40 + i * 10));
        std::fs::write(&pgm, bytes).unwrap();
        let script = format!(
            r#"
while read -r tag seq w h; do
  head -c $((w * h * 3)) > /dev/null
  echo "FRAME $seq"
  echo "$seq file {}"
  echo "END $seq"
done
"#,
            pgm.display()
        );
        let mut depth = AdapterDepth::spawn(&sh(&script)).unwrap();
        let frame = Frame::filled(64, 64, [0, 0, 0], 1).unwrap();
        let map = depth.estimate_depth(&frame).unwrap();
        assert_eq!(map.dimensions(), (64, 64));
        // Oracle: scan min and max after normalization.
        let (lo, hi) = map
            .values()
            .iter()
            .fold((f32::MAX, f32::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert_eq!((lo, hi), (0.0, 1.0));
        // Brightest raw sample (bottom-right, nearest) maps to 0.
        assert_eq!(map.at(63, 63), 0.0);
        assert_eq!(map.at(0, 0), 1.0);
    }
}
