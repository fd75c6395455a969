//! Engine configuration file.
//!
//! A single TOML document; every section and field is optional and falls
//! back to its default. Secrets are never read from the file: the HTTP
//! provider takes its key from the environment variable named by
//! `services.http.api_key_env` (default `SCENECAST_API_KEY`).

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use scenecast_core::eval::{AugmentationSpec, SplitPlan};
use scenecast_core::orchestrator::{EngineSettings, SafeGuardConfig, ToneConfig};
use scenecast_core::perception::PointerColorProfile;
use scenecast_core::services::HttpProviderConfig;
use scenecast_core::spatial::SpatialConfig;
use scenecast_core::transport::{ServerConfig, DEFAULT_PORT};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub ingestion: IngestionConfig,
    pub perception: PerceptionConfig,
    pub spatial: SpatialConfig,
    pub safeguard: SafeGuardSection,
    pub tone: ToneSection,
    pub services: ServicesConfig,
    pub transport: TransportConfig,
    pub bench: BenchConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IngestionMode {
    #[default]
    ImageDir,
    VideoFile,
    LiveCamera,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestionConfig {
    pub mode: IngestionMode,
    /// Image directory or video file.
    pub path: Option<PathBuf>,
    /// Capture device for live mode, e.g. `/dev/video0`.
    pub device: Option<String>,
    /// ffmpeg input format for live mode (`v4l2`, `avfoundation`, `dshow`).
    pub input_format: Option<String>,
    pub fps: u32,
    /// Frames are scaled to this size by ffmpeg.
    pub width: u32,
    pub height: u32,
    /// Restart an image directory from the top when it runs out (serve).
    /// Looped frames keep counting seq, so fixture scripts only cover the
    /// first pass.
    pub loop_frames: bool,
}

impl Default for IngestionConfig {
    fn default() -> Self {
        Self {
            mode: IngestionMode::ImageDir,
            path: None,
            device: None,
            input_format: None,
            fps: 30,
            width: 640,
            height: 640,
            loop_frames: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[default]
    Fixture,
    Adapter,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointerPreset {
    #[default]
    Green,
    Blue,
    Custom,
    Off,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    pub detector: BackendKind,
    pub depth: BackendKind,
    /// Annotation script for fixture backends.
    pub script: Option<PathBuf>,
    /// Adapter commands, argv form.
    pub detector_cmd: Vec<String>,
    pub depth_cmd: Vec<String>,
    pub conf_threshold: f32,
    /// Square model input for letterboxing adapter frames.
    pub input_size: u32,
    pub pointer: PointerPreset,
    /// Used when `pointer = "custom"`.
    pub pointer_profile: PointerColorProfile,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            detector: BackendKind::Fixture,
            depth: BackendKind::Fixture,
            script: None,
            detector_cmd: Vec::new(),
            depth_cmd: Vec::new(),
            conf_threshold: 0.25,
            input_size: 640,
            pointer: PointerPreset::Green,
            pointer_profile: PointerColorProfile::default(),
        }
    }
}

impl PerceptionConfig {
    pub fn pointer_profile(&self) -> Option<PointerColorProfile> {
        match self.pointer {
            PointerPreset::Green => Some(PointerColorProfile::green()),
            PointerPreset::Blue => Some(PointerColorProfile::blue()),
            PointerPreset::Custom => Some(self.pointer_profile),
            PointerPreset::Off => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafeGuardSection {
    pub confidence_gate: f32,
    pub cooldown_ms: u64,
}

impl Default for SafeGuardSection {
    fn default() -> Self {
        let d = SafeGuardConfig::default();
        Self {
            confidence_gate: d.confidence_gate,
            cooldown_ms: d.cooldown.as_millis() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToneSection {
    pub enabled: bool,
    pub refresh_ms: u64,
    pub brightness_shift: f64,
}

impl Default for ToneSection {
    fn default() -> Self {
        let d = ToneConfig::default();
        Self {
            enabled: true,
            refresh_ms: d.refresh_interval.as_millis() as u64,
            brightness_shift: d.brightness_shift,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    #[default]
    Fixture,
    Http,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServicesConfig {
    pub provider: ProviderKind,
    /// Recorded responses for the fixture provider.
    pub fixtures: Option<PathBuf>,
    /// Scene name used for fixture tone lookup; defaults to the script stem.
    pub scene: Option<String>,
    pub pool_size: usize,
    pub http: HttpProviderConfig,
}

impl Default for ServicesConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Fixture,
            fixtures: None,
            scene: None,
            pool_size: 4,
            http: HttpProviderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub bind: String,
    pub port: u16,
    pub handshake_timeout_ms: u64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            handshake_timeout_ms: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub fps: u32,
    pub duration_s: f64,
    pub key_every: u32,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            fps: 30,
            duration_s: 60.0,
            key_every: 30,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub seed: u64,
    pub splits: SplitPlan,
    pub augmentation: AugmentationSpec,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

impl EngineConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map(|s| {
                    let (l, c) = line_col(text, s.start);
                    format!(":{l}:{c}")
                })
                .unwrap_or_default();
            CliError::Config(format!("{}{at}: {}", origin.display(), e.message()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut c = Self::parse(&text, path)?;
        c.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(c)
    }

    /// Makes relative file paths relative to `base` (the config's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.ingestion.path,
            &mut self.perception.script,
            &mut self.services.fixtures,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Range checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        self.spatial
            .validate()
            .or_else(|e| bad("spatial", e.to_string()))?;
        if self.ingestion.fps == 0 {
            return bad("ingestion.fps", "must be positive".into());
        }
        if self.ingestion.width == 0 || self.ingestion.height == 0 {
            return bad("ingestion.width/height", "must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.perception.conf_threshold) {
            return bad("perception.conf_threshold", format!("{} outside [0, 1]", self.perception.conf_threshold));
        }
        if !(0.0..=1.0).contains(&self.safeguard.confidence_gate) {
            return bad("safeguard.confidence_gate", format!("{} outside [0, 1]", self.safeguard.confidence_gate));
        }
        if self.services.pool_size == 0 {
            return bad("services.pool_size", "must be at least 1".into());
        }
        if self.perception.detector == BackendKind::None {
            return bad("perception.detector", "a detector is required".into());
        }
        if self.perception.detector == BackendKind::Adapter && self.perception.detector_cmd.is_empty() {
            return bad("perception.detector_cmd", "required when detector = \"adapter\"".into());
        }
        if self.perception.depth == BackendKind::Adapter && self.perception.depth_cmd.is_empty() {
            return bad("perception.depth_cmd", "required when depth = \"adapter\"".into());
        }
        self.eval.splits.validate().or_else(|e| bad("eval.splits", e.to_string()))?;
        self.eval
            .augmentation
            .validate()
            .or_else(|e| bad("eval.augmentation", e.to_string()))?;
        self.bind_addr()?;
        Ok(())
    }

    /// Checks that the paths the chosen backends need exist.
    pub fn check_paths(&self, need_ingestion: bool) -> Result<(), CliError> {
        let must_exist = |field: &str, p: &Option<PathBuf>| -> Result<(), CliError> {
            match p {
                Some(p) if p.exists() => Ok(()),
                Some(p) => Err(CliError::Config(format!("{field}: {} does not exist", p.display()))),
                None => Err(CliError::Config(format!("{field}: missing"))),
            }
        };
        if need_ingestion && self.ingestion.mode != IngestionMode::LiveCamera {
            must_exist("ingestion.path", &self.ingestion.path)?;
        }
        if need_ingestion && self.ingestion.mode == IngestionMode::LiveCamera && self.ingestion.device.is_none() {
            return Err(CliError::Config("ingestion.device: missing".into()));
        }
        if self.perception.detector == BackendKind::Fixture || self.perception.depth == BackendKind::Fixture {
            must_exist("perception.script", &self.perception.script)?;
        }
        if self.services.provider == ProviderKind::Fixture {
            if let Some(p) = &self.services.fixtures {
                must_exist("services.fixtures", &Some(p.clone()))?;
            }
        }
        Ok(())
    }

    pub fn bind_addr(&self) -> Result<SocketAddr, CliError> {
        format!("{}:{}", self.transport.bind, self.transport.port)
            .parse()
            .map_err(|e| CliError::Config(format!("transport.bind: {e}")))
    }

    pub fn engine_settings(&self) -> EngineSettings {
        EngineSettings {
            spatial: self.spatial,
            safeguard: SafeGuardConfig {
                confidence_gate: self.safeguard.confidence_gate,
                cooldown: Duration::from_millis(self.safeguard.cooldown_ms),
            },
            pool_size: self.services.pool_size,
        }
    }

    pub fn tone_config(&self) -> ToneConfig {
        ToneConfig {
            refresh_interval: Duration::from_millis(self.tone.refresh_ms),
            brightness_shift: self.tone.brightness_shift,
        }
    }

    pub fn server_config(&self) -> Result<ServerConfig, CliError> {
        Ok(ServerConfig {
            bind: self.bind_addr()?,
            handshake_timeout: Duration::from_millis(self.transport.handshake_timeout_ms),
            ..ServerConfig::default()
        })
    }

    /// Fixture scene name: explicit, else the annotation script's stem.
    pub fn scene_name(&self) -> Option<String> {
        self.services.scene.clone().or_else(|| {
            self.perception
                .script
                .as_ref()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let c = EngineConfig::parse("", Path::new("c.toml")).unwrap();
        assert_eq!(c, EngineConfig::default());
        assert_eq!(c.transport.port, 8765);
        c.validate().unwrap();
    }

    #[test]
    fn sections_override_defaults() {
        let c = EngineConfig::parse(
            r#"
[ingestion]
mode = "video-file"
path = "clip.mp4"
fps = 22

[spatial]
sweep_gap = 200

[perception]
pointer = "off"

[services.http]
endpoint = "https://example.invalid"
"#,
            Path::new("c.toml"),
        )
        .unwrap();
        assert_eq!(c.ingestion.mode, IngestionMode::VideoFile);
        assert_eq!(c.ingestion.fps, 22);
        assert_eq!(c.spatial.sweep_gap, 200);
        assert_eq!(c.spatial.aim_radius, 80.0);
        assert!(c.perception.pointer_profile().is_none());
        assert_eq!(c.services.http.api_key_env, "SCENECAST_API_KEY");
    }

    #[test]
    fn errors_name_line_and_field() {
        let e = EngineConfig::parse("[transport]\nport = 8765\n\n[spatial]\nsweep_gapp = 3\n", Path::new("c.toml"))
            .unwrap_err()
            .to_string();
        assert!(e.contains("c.toml:5:"), "{e}");
        assert!(e.contains("sweep_gapp"), "{e}");
        let e = EngineConfig::parse("[ingestion]\nmode = \"webcam\"\n", Path::new("c.toml"))
            .unwrap_err()
            .to_string();
        assert!(e.contains("c.toml:2:"), "{e}");
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = EngineConfig::default();
        c.perception.conf_threshold = 1.5;
        assert!(c.validate().unwrap_err().to_string().contains("perception.conf_threshold"));
        let mut c = EngineConfig::default();
        c.ingestion.path = Some("/definitely/not/here".into());
        let e = c.check_paths(true).unwrap_err().to_string();
        assert!(e.contains("/definitely/not/here"), "{e}");
    }
}
