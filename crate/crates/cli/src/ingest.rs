//! Frame sources: image directories and ffmpeg-decoded video or cameras.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};

use scenecast_core::Frame;

use crate::config::{IngestionConfig, IngestionMode};
use crate::CliError;

fn stamp(seq: u64, fps: u32) -> u64 {
    (seq as f64 * 1e9 / f64::from(fps.max(1))) as u64
}

/// Image files under `dir`, sorted by name. Subdirectories are ignored.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rd = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = rd
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn decode_image(path: &Path, seq: u64, ts: u64) -> Result<Frame, String> {
    let img = image::open(path).map_err(|e| e.to_string())?.to_rgb8();
    let (w, h) = img.dimensions();
    Frame::new(img.into_raw(), w, h, ts, seq).map_err(|e| e.to_string())
}

/// Decodes every readable image in `dir`. Files that fail to decode are
/// skipped with a warning; seq numbers stay contiguous over the survivors.
pub fn load_image_dir(dir: &Path, fps: u32) -> Result<Vec<Frame>, CliError> {
    let mut frames = Vec::new();
    for p in list_images(dir)? {
        let seq = frames.len() as u64;
        match decode_image(&p, seq, stamp(seq, fps)) {
            Ok(f) => frames.push(f),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    Ok(frames)
}

/// Raw RGB frames from an ffmpeg subprocess.
pub struct FfmpegSource {
    child: Child,
    stdout: ChildStdout,
    width: u32,
    height: u32,
    fps: u32,
    seq: u64,
}

impl FfmpegSource {
    /// `realtime` makes ffmpeg read file input at its native rate.
    pub fn spawn(
        input: &str,
        input_format: Option<&str>,
        width: u32,
        height: u32,
        fps: u32,
        realtime: bool,
    ) -> Result<Self, CliError> {
        let mut cmd = Command::new("ffmpeg");
        cmd.args(["-hide_banner", "-loglevel", "error", "-nostdin"]);
        if realtime {
            cmd.arg("-re");
        }
        if let Some(f) = input_format {
            cmd.args(["-f", f]);
        }
        cmd.args(["-i", input])
            .args(["-vf", &format!("scale={width}:{height},fps={fps}")])
            .args(["-pix_fmt", "rgb24", "-f", "rawvideo", "-"])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        let mut child = cmd
            .spawn()
            .map_err(|e| CliError::Runtime(format!("cannot start ffmpeg: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self {
            child,
            stdout,
            width,
            height,
            fps,
            seq: 0,
        })
    }
}

impl Iterator for FfmpegSource {
    type Item = Frame;

    fn next(&mut self) -> Option<Frame> {
        let mut buf = vec![0u8; self.width as usize * self.height as usize * 3];
        if let Err(e) = self.stdout.read_exact(&mut buf) {
            if e.kind() != std::io::ErrorKind::UnexpectedEof {
                log::warn!("ffmpeg read failed: {e}");
            }
            return None;
        }
        let seq = self.seq;
        self.seq += 1;
        Frame::new(buf, self.width, self.height, stamp(seq, self.fps), seq).ok()
    }
}

impl Drop for FfmpegSource {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Source for the configured ingestion mode.
pub enum FrameSource {
    Images { frames: Vec<Frame>, next: usize, looped: bool, fps: u32, cycle: u64 },
    Stream(FfmpegSource),
}

impl FrameSource {
    pub fn open(cfg: &IngestionConfig, realtime: bool) -> Result<Self, CliError> {
        let path = || {
            cfg.path
                .as_ref()
                .ok_or_else(|| CliError::Config("ingestion.path: missing".into()))
        };
        match cfg.mode {
            IngestionMode::ImageDir => {
                let dir = path()?;
                if !dir.is_dir() {
                    return Err(CliError::Config(format!("ingestion.path: {} is not a directory", dir.display())));
                }
                Ok(FrameSource::Images {
                    frames: load_image_dir(dir, cfg.fps)?,
                    next: 0,
                    looped: cfg.loop_frames,
                    fps: cfg.fps,
                    cycle: 0,
                })
            }
            IngestionMode::VideoFile => {
                let p = path()?;
                if !p.is_file() {
                    return Err(CliError::Config(format!("ingestion.path: {} does not exist", p.display())));
                }
                FfmpegSource::spawn(&p.to_string_lossy(), None, cfg.width, cfg.height, cfg.fps, realtime)
                    .map(FrameSource::Stream)
            }
            IngestionMode::LiveCamera => {
                let dev = cfg
                    .device
                    .as_deref()
                    .ok_or_else(|| CliError::Config("ingestion.device: missing".into()))?;
                let fmt = cfg.input_format.as_deref().or(default_camera_format());
                FfmpegSource::spawn(dev, fmt, cfg.width, cfg.height, cfg.fps, false).map(FrameSource::Stream)
            }
        }
    }

    /// Image sources are replayed at a fixed rate; streams pace themselves.
    pub fn needs_pacing(&self) -> bool {
        matches!(self, FrameSource::Images { .. })
    }
}

fn default_camera_format() -> Option<&'static str> {
    if cfg!(target_os = "linux") {
        Some("v4l2")
    } else if cfg!(target_os = "macos") {
        Some("avfoundation")
    } else if cfg!(target_os = "windows") {
        Some("dshow")
    } else {
        None
    }
}

impl Iterator for FrameSource {
    type Item = Frame;

    fn next(&mut self) -> Option<Frame> {
        match self {
            FrameSource::Images { frames, next, looped, fps, cycle } => {
                if frames.is_empty() {
                    return None;
                }
                if *next == frames.len() {
                    if !*looped {
                        return None;
                    }
                    *next = 0;
                    *cycle += 1;
                }
                let seq = *cycle * frames.len() as u64 + *next as u64;
                let f = frames[*next].restamped(stamp(seq, *fps), seq);
                *next += 1;
                Some(f)
            }
            FrameSource::Stream(s) => s.next(),
        }
    }
}
