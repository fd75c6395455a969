//! Builds backends, providers and engines from an [`EngineConfig`].

use std::sync::Arc;

use scenecast_core::clock::SharedClock;
use scenecast_core::orchestrator::{Backends, Channels, CueSink, Engine, PipelineConfig};
use scenecast_core::perception::adapter::{AdapterDepth, AdapterDetector};
use scenecast_core::perception::fixture::FixtureScene;
use scenecast_core::perception::{DepthBackend, DetectorBackend, PointerDetector};
use scenecast_core::services::{AiProvider, FixtureProvider, HttpProvider, Services};

use crate::config::{BackendKind, EngineConfig, ProviderKind};
use crate::CliError;

pub fn backends(cfg: &EngineConfig) -> Result<Backends, CliError> {
    let p = &cfg.perception;
    let scene = match (&p.script, p.detector == BackendKind::Fixture || p.depth == BackendKind::Fixture) {
        (Some(s), true) => Some(FixtureScene::load(s).map_err(|e| CliError::Config(format!("perception.script: {e}")))?),
        (None, true) => return Err(CliError::Config("perception.script: missing".into())),
        _ => None,
    };
    let detector: Box<dyn DetectorBackend> = match p.detector {
        BackendKind::Fixture => Box::new(scene.as_ref().expect("loaded above").detector(p.conf_threshold)),
        BackendKind::Adapter => Box::new(
            AdapterDetector::spawn(&p.detector_cmd, p.conf_threshold)
                .map_err(|e| CliError::Runtime(format!("detector adapter: {e}")))?
                .with_input_size(p.input_size),
        ),
        BackendKind::None => return Err(CliError::Config("perception.detector: a detector is required".into())),
    };
    let depth: Option<Box<dyn DepthBackend>> = match p.depth {
        BackendKind::Fixture => Some(Box::new(scene.as_ref().expect("loaded above").depth())),
        BackendKind::Adapter => Some(Box::new(
            AdapterDepth::spawn(&p.depth_cmd).map_err(|e| CliError::Runtime(format!("depth adapter: {e}")))?,
        )),
        BackendKind::None => None,
    };
    Ok(Backends {
        detector,
        depth,
        pointer: p.pointer_profile().map(PointerDetector::new),
    })
}

pub fn provider(cfg: &EngineConfig) -> Result<Arc<dyn AiProvider>, CliError> {
    let scene = cfg.scene_name();
    match cfg.services.provider {
        ProviderKind::Fixture => {
            let p = match &cfg.services.fixtures {
                Some(dir) => FixtureProvider::load_dir(dir, scene.as_deref())
                    .map_err(|e| CliError::Config(format!("services.fixtures: {}: {e}", dir.display())))?,
                None => {
                    let mut p = FixtureProvider::new();
                    p.set_scene(scene.as_deref());
                    p
                }
            };
            Ok(Arc::new(p))
        }
        ProviderKind::Http => HttpProvider::new(cfg.services.http.clone())
            .map(|p| Arc::new(p) as Arc<dyn AiProvider>)
            .map_err(|e| CliError::Config(format!("services.http: {e}"))),
    }
}

pub fn engine(
    cfg: &EngineConfig,
    clock: SharedClock,
    provider: Arc<dyn AiProvider>,
    sink: Arc<dyn CueSink>,
) -> Arc<Engine> {
    let channels = Arc::new(Channels::new(clock.clone()));
    let services = Arc::new(Services::new(provider, clock));
    Arc::new(Engine::new(channels, services, sink, cfg.engine_settings()))
}

pub fn pipeline_config(cfg: &EngineConfig) -> PipelineConfig {
    PipelineConfig {
        tone: cfg.tone_config(),
        disable_tone: !cfg.tone.enabled,
    }
}
