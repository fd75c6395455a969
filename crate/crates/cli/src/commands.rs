//! The run modes.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use scenecast_core::clock::{SharedClock, SystemClock};
use scenecast_core::eval::files::{load_labels, LabelFile};
use scenecast_core::eval::{
    augment_copies, load_dirs, load_index, load_indexed, map_summary, plan_splits, run_bench, Split,
    Workload,
};
use scenecast_core::orchestrator::{InteractionKey, NullSink, Pipeline, SyncPipeline};
use scenecast_core::transport::{ServerEvent, TransportServer};
use scenecast_core::{BBox, ObjectClass};

use crate::config::{EngineConfig, IngestionMode};
use crate::ingest::{self, FrameSource};
use crate::replay::{self, Press};
use crate::{wiring, CliError};

/// Time allowed for workers to drain on shutdown.
pub const DRAIN: Duration = Duration::from_secs(2);

fn write_out(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub struct ReplayArgs {
    pub frames: PathBuf,
    pub out: Option<PathBuf>,
    pub presses: Vec<Press>,
}

pub fn replay(cfg: &EngineConfig, args: &ReplayArgs) -> Result<(), CliError> {
    cfg.validate()?;
    cfg.check_paths(false)?;
    if !args.frames.is_dir() {
        return Err(CliError::Config(format!("--frames: {} is not a directory", args.frames.display())));
    }
    let frames = ingest::load_image_dir(&args.frames, cfg.ingestion.fps)?;
    if frames.is_empty() {
        return Err(CliError::Config(format!("--frames: no readable images in {}", args.frames.display())));
    }
    let presses = if args.presses.is_empty() {
        Press::default_schedule()
    } else {
        args.presses.clone()
    };
    let text = replay::run(cfg, &frames, wiring::backends(cfg)?, wiring::provider(cfg)?, &presses)?;
    log::info!("replayed {} frames, {} presses", frames.len(), presses.len());
    write_out(args.out.as_deref(), &text)
}

pub struct BenchArgs {
    pub out: Option<PathBuf>,
}

pub fn bench(cfg: &EngineConfig, args: &BenchArgs) -> Result<(), CliError> {
    cfg.validate()?;
    cfg.check_paths(true)?;
    if cfg.ingestion.mode == IngestionMode::LiveCamera {
        return Err(CliError::Config("ingestion.mode: bench needs a recorded source".into()));
    }
    let b = &cfg.bench;
    let want = (b.duration_s * f64::from(b.fps)).round() as usize;
    let mut ing = cfg.ingestion.clone();
    ing.loop_frames = false;
    let frames: Vec<_> = FrameSource::open(&ing, false)?.take(want.max(1)).collect();
    if frames.is_empty() {
        return Err(CliError::Config("ingestion.path: no frames decoded".into()));
    }
    let clock: SharedClock = Arc::new(SystemClock::new());
    let engine = wiring::engine(cfg, clock, wiring::provider(cfg)?, Arc::new(NullSink));
    let mut p = SyncPipeline::new(engine, wiring::backends(cfg)?, wiring::pipeline_config(cfg));
    let workload = Workload {
        frames,
        fps: b.fps,
        duration: Duration::from_secs_f64(b.duration_s.max(0.0)),
        key_every: b.key_every,
    };
    let report = run_bench(&mut p, &workload);
    write_out(args.out.as_deref(), &report.to_tsv())
}

pub enum EvalInput {
    Dirs { gt: PathBuf, pred: PathBuf },
    Index { index: PathBuf, split: Option<Split> },
}

pub fn eval(cfg: &EngineConfig, input: &EvalInput, out: Option<&Path>) -> Result<(), CliError> {
    let records = match input {
        EvalInput::Dirs { gt, pred } => {
            for (flag, p) in [("--gt", gt), ("--pred", pred)] {
                if !p.is_dir() {
                    return Err(CliError::Config(format!("{flag}: {} is not a directory", p.display())));
                }
            }
            load_dirs(gt, pred).map_err(|e| CliError::Config(e.to_string()))?
        }
        EvalInput::Index { index, split } => {
            let entries = load_index(index).map_err(|e| CliError::Config(e.to_string()))?;
            let entries = match split {
                None => entries,
                Some(s) => {
                    let plan = splits_of(cfg, &entries)?;
                    entries.into_iter().filter(|e| plan.get(&e.image_id) == Some(s)).collect()
                }
            };
            load_indexed(&entries).map_err(|e| CliError::Config(e.to_string()))?
        }
    };
    log::info!("scoring {} images", records.len());
    write_out(out, &map_summary(&records).to_tsv())
}

fn splits_of(
    cfg: &EngineConfig,
    entries: &[scenecast_core::eval::IndexEntry],
) -> Result<BTreeMap<String, Split>, CliError> {
    let ids: Vec<(String, String)> = entries.iter().map(|e| (e.image_id.clone(), e.app.clone())).collect();
    plan_splits(&ids, &cfg.eval.splits, cfg.eval.seed).map_err(|e| CliError::Config(format!("eval.splits: {e}")))
}

fn find_image(dir: &Path, id: &str) -> Option<PathBuf> {
    ["png", "jpg", "jpeg", "ppm"]
        .iter()
        .map(|ext| dir.join(format!("{id}.{ext}")))
        .find(|p| p.is_file())
}

fn label_text(boxes: &[(ObjectClass, BBox)]) -> String {
    boxes
        .iter()
        .map(|(c, b)| format!("{} {:.1} {:.1} {:.1} {:.1}\n", c.id, b.x_min, b.y_min, b.x_max, b.y_max))
        .collect()
}

/// Writes augmented copies of every train-split image with its labels.
/// Returns the number of images written.
pub fn augment(cfg: &EngineConfig, index: &Path, images: &Path, out: &Path) -> Result<usize, CliError> {
    cfg.validate()?;
    let entries = load_index(index).map_err(|e| CliError::Config(e.to_string()))?;
    let plan = splits_of(cfg, &entries)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let mut train: Vec<_> = entries.iter().filter(|e| plan.get(&e.image_id) == Some(&Split::Train)).collect();
    train.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut written = 0;
    for (i, e) in train.iter().enumerate() {
        let Some(path) = find_image(images, &e.image_id) else {
            log::warn!("no image for {} in {}", e.image_id, images.display());
            continue;
        };
        let frame = match ingest::decode_image(&path, 0, 0) {
            Ok(f) => f,
            Err(err) => {
                log::warn!("skipping {}: {err}", path.display());
                continue;
            }
        };
        let LabelFile { ground_truth, .. } = load_labels(&e.gt).map_err(|e| CliError::Config(e.to_string()))?;
        let copies = augment_copies(&cfg.eval.augmentation, i as u64, &frame, &ground_truth)
            .map_err(|e| CliError::Config(format!("eval.augmentation: {e}")))?;
        for (k, (img, boxes)) in copies.iter().enumerate() {
            let stem = format!("{}_aug{k}", e.image_id);
            let (w, h) = img.dimensions();
            let buf = image::RgbImage::from_raw(w, h, img.pixels().to_vec()).expect("frame buffer matches size");
            let png = out.join(format!("{stem}.png"));
            buf.save(&png).map_err(|e| CliError::Runtime(format!("{}: {e}", png.display())))?;
            let txt = out.join(format!("{stem}.txt"));
            std::fs::write(&txt, label_text(boxes)).map_err(|e| CliError::Runtime(format!("{}: {e}", txt.display())))?;
            written += 1;
        }
    }
    Ok(written)
}

enum Command {
    Key(InteractionKey),
    Quit,
}

/// Live pipeline plus transport server until stdin says `quit` or closes.
pub fn serve(cfg: &EngineConfig) -> Result<(), CliError> {
    cfg.validate()?;
    cfg.check_paths(true)?;
    let source = FrameSource::open(&cfg.ingestion, true)?;
    let (ev_tx, ev_rx) = mpsc::channel();
    let server = TransportServer::start(cfg.server_config()?, ev_tx)
        .map_err(|e| CliError::Runtime(format!("cannot listen on {}: {e}", cfg.bind_addr().map(|a| a.to_string()).unwrap_or_default())))?;
    let server = Arc::new(server);
    log::info!("listening on {}", server.url());

    let clock: SharedClock = Arc::new(SystemClock::new());
    let engine = wiring::engine(cfg, clock, wiring::provider(cfg)?, server.clone());
    let pipeline = Arc::new(Pipeline::start(engine.clone(), wiring::backends(cfg)?, wiring::pipeline_config(cfg)));

    let stop = Arc::new(AtomicBool::new(false));
    let ingest_thread = {
        let (stop, pipeline) = (stop.clone(), pipeline.clone());
        let period = Duration::from_secs_f64(1.0 / f64::from(cfg.ingestion.fps));
        std::thread::Builder::new()
            .name("ingest".into())
            .spawn(move || {
                let pace = source.needs_pacing();
                let mut next = Instant::now();
                for frame in source {
                    if stop.load(Ordering::Relaxed) {
                        break;
                    }
                    pipeline.submit(frame);
                    if pace {
                        next += period;
                        if let Some(d) = next.checked_duration_since(Instant::now()) {
                            std::thread::sleep(d);
                        }
                    }
                }
                log::info!("ingestion finished");
            })
            .map_err(CliError::runtime)?
    };

    let (cmd_tx, cmd_rx) = mpsc::channel();
    {
        let tx = cmd_tx.clone();
        std::thread::spawn(move || {
            for ev in ev_rx {
                match ev {
                    ServerEvent::Keypress { key, .. } => {
                        if tx.send(Command::Key(key)).is_err() {
                            break;
                        }
                    }
                    ServerEvent::Connected { session, agent } => log::info!("session {session} connected ({agent})"),
                    ServerEvent::Disconnected { session } => log::info!("session {session} disconnected"),
                }
            }
        });
    }
    std::thread::spawn(move || {
        for line in std::io::stdin().lock().lines() {
            let Ok(line) = line else { break };
            let l = line.trim();
            if l.is_empty() {
                continue;
            }
            let cmd = match l {
                "q" | "quit" | "exit" => Command::Quit,
                _ => match InteractionKey::parse_command(l) {
                    Some(k) => Command::Key(k),
                    None => {
                        eprintln!("commands: cc, ss, aa, quit");
                        continue;
                    }
                },
            };
            if cmd_tx.send(cmd).is_err() {
                return;
            }
        }
        let _ = cmd_tx.send(Command::Quit);
    });

    for cmd in cmd_rx {
        match cmd {
            Command::Key(key) => {
                let engine = engine.clone();
                // Dispatch blocks on services; a later press cancels this one.
                std::thread::spawn(move || match engine.dispatch(key) {
                    Ok(r) => log::info!(
                        "{}: {} ms to result, realized {} ms",
                        key.name(),
                        r.ledger.total_ms,
                        r.ledger.realized_ms()
                    ),
                    Err(e) => log::warn!("{}: {e}", key.name()),
                });
            }
            Command::Quit => break,
        }
    }

    stop.store(true, Ordering::Relaxed);
    let _ = ingest_thread.join();
    let drained = match Arc::try_unwrap(pipeline) {
        Ok(p) => p.shutdown(DRAIN),
        Err(_) => false,
    };
    if !drained {
        log::warn!("workers did not drain within {DRAIN:?}");
    }
    Ok(())
}
