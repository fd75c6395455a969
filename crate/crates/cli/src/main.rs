use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scenecast_cli::commands::{self, BenchArgs, EvalInput, ReplayArgs};
use scenecast_cli::config::{BackendKind, EngineConfig, IngestionMode, PointerPreset, ProviderKind};
use scenecast_cli::replay::Press;
use scenecast_cli::CliError;
use scenecast_core::eval::Split;

#[derive(Parser)]
#[command(name = "scenecast", version, about = "Audio scene reader engine")]
struct Cli {
    /// TOML engine config; every field is optional.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Log filter, e.g. `info` or `scenecast_core=debug`. Overrides RUST_LOG.
    #[arg(long, global = true)]
    log: Option<String>,
    #[command(subcommand)]
    mode: Mode,
}

/// Flags that override config fields.
#[derive(Args, Default)]
struct Overrides {
    /// Annotation script for fixture perception.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Recorded service responses.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Scene name for fixture tone lookup.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long, value_enum)]
    provider: Option<ProviderArg>,
    #[arg(long, value_enum)]
    depth: Option<BackendArg>,
    #[arg(long, value_enum)]
    pointer: Option<PointerArg>,
    #[arg(long)]
    conf_threshold: Option<f32>,
    #[arg(long)]
    fps: Option<u32>,
    /// Disable tone classification.
    #[arg(long)]
    no_tone: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Fixture,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Fixture,
    Adapter,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum PointerArg {
    Green,
    Blue,
    Custom,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Subcommand)]
enum Mode {
    /// Run the live pipeline and the websocket server. Reads `cc`, `ss`,
    /// `aa` and `quit` from stdin.
    Serve {
        /// Image directory to stream.
        #[arg(long, conflicts_with_all = ["video", "device"])]
        frames: Option<PathBuf>,
        #[arg(long, conflicts_with = "device")]
        video: Option<PathBuf>,
        /// Capture device, e.g. /dev/video0.
        #[arg(long)]
        device: Option<String>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[command(flatten)]
        o: Overrides,
    },
    /// Replay an image sequence deterministically and write a cue transcript.
    Replay {
        #[arg(long)]
        frames: PathBuf,
        /// Transcript path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `SEQ:KEY` or `end:KEY`, KEY one of cc, ss, aa. Repeatable.
        /// Defaults to cc, ss, aa after the last frame.
        #[arg(long = "press", value_parser = Press::parse)]
        presses: Vec<Press>,
        #[command(flatten)]
        o: Overrides,
    },
    /// Per-stage latency benchmark over a recorded source.
    Bench {
        #[arg(long, conflicts_with = "video")]
        frames: Option<PathBuf>,
        #[arg(long)]
        video: Option<PathBuf>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        o: Overrides,
    },
    /// Score predictions against ground truth (per-class AP, mAP).
    Eval {
        #[arg(long, requires = "pred", conflicts_with = "index")]
        gt: Option<PathBuf>,
        #[arg(long, requires = "gt")]
        pred: Option<PathBuf>,
        /// Image index TSV: image_id, app, gt path, pred path.
        #[arg(long, required_unless_present = "gt")]
        index: Option<PathBuf>,
        /// Score only this split of the index.
        #[arg(long, value_enum, requires = "index")]
        split: Option<SplitArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write augmented copies of the train split.
    Augment {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

impl Overrides {
    fn apply(&self, c: &mut EngineConfig) {
        if let Some(s) = &self.script {
            c.perception.script = Some(s.clone());
        }
        if let Some(f) = &self.fixtures {
            c.services.fixtures = Some(f.clone());
        }
        if let Some(s) = &self.scene {
            c.services.scene = Some(s.clone());
        }
        if let Some(p) = self.provider {
            c.services.provider = match p {
                ProviderArg::Fixture => ProviderKind::Fixture,
                ProviderArg::Http => ProviderKind::Http,
            };
        }
        if let Some(d) = self.depth {
            c.perception.depth = match d {
                BackendArg::Fixture => BackendKind::Fixture,
                BackendArg::Adapter => BackendKind::Adapter,
                BackendArg::None => BackendKind::None,
            };
        }
        if let Some(p) = self.pointer {
            c.perception.pointer = match p {
                PointerArg::Green => PointerPreset::Green,
                PointerArg::Blue => PointerPreset::Blue,
                PointerArg::Custom => PointerPreset::Custom,
                PointerArg::Off => PointerPreset::Off,
            };
        }
        if let Some(t) = self.conf_threshold {
            c.perception.conf_threshold = t;
        }
        if let Some(f) = self.fps {
            c.ingestion.fps = f;
        }
        if self.no_tone {
            c.tone.enabled = false;
        }
    }
}

fn set_source(c: &mut EngineConfig, frames: Option<PathBuf>, video: Option<PathBuf>, device: Option<String>) {
    if let Some(p) = frames {
        c.ingestion.mode = IngestionMode::ImageDir;
        c.ingestion.path = Some(p);
    } else if let Some(p) = video {
        c.ingestion.mode = IngestionMode::VideoFile;
        c.ingestion.path = Some(p);
    } else if let Some(d) = device {
        c.ingestion.mode = IngestionMode::LiveCamera;
        c.ingestion.device = Some(d);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    match cli.mode {
        Mode::Serve { frames, video, device, bind, port, o } => {
            o.apply(&mut cfg);
            set_source(&mut cfg, frames, video, device);
            if let Some(b) = bind {
                cfg.transport.bind = b;
            }
            if let Some(p) = port {
                cfg.transport.port = p;
            }
            commands::serve(&cfg)
        }
        Mode::Replay { frames, out, presses, o } => {
            o.apply(&mut cfg);
            commands::replay(&cfg, &ReplayArgs { frames, out, presses })
        }
        Mode::Bench { frames, video, duration, out, o } => {
            o.apply(&mut cfg);
            set_source(&mut cfg, frames, video, None);
            if let Some(f) = o.fps {
                cfg.bench.fps = f;
            }
            if let Some(d) = duration {
                cfg.bench.duration_s = d;
            }
            commands::bench(&cfg, &BenchArgs { out })
        }
        Mode::Eval { gt, pred, index, split, seed, out } => {
            if let Some(s) = seed {
                cfg.eval.seed = s;
            }
            let input = match (gt, pred, index) {
                (Some(gt), Some(pred), _) => EvalInput::Dirs { gt, pred },
                (_, _, Some(index)) => EvalInput::Index {
                    index,
                    split: split.map(|s| match s {
                        SplitArg::Train => Split::Train,
                        SplitArg::Val => Split::Val,
                        SplitArg::Test => Split::Test,
                    }),
                },
                _ => return Err(CliError::Config("eval needs --gt and --pred, or --index".into())),
            };
            commands::eval(&cfg, &input, out.as_deref())
        }
        Mode::Augment { index, images, out, seed } => {
            if let Some(s) = seed {
                cfg.eval.seed = s;
                cfg.eval.augmentation.seed = s;
            }
            let n = commands::augment(&cfg, &index, &images, &out)?;
            log::info!("wrote {n} augmented images to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut log = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if let Some(f) = &cli.log {
        log.parse_filters(f);
    }
    log.init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scenecast: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
