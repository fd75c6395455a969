use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use scenecast_cli::config::EngineConfig;
use scenecast_cli::ingest::load_image_dir;
use scenecast_core::transport::wire::Packet;
use scenecast_core::transport::TestClient;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_scenecast"));
    c.env_remove("RUST_LOG");
    c
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn scenecast")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn replay_to(out: &Path) -> Output {
    let f = fixtures();
    run(&[
        "replay",
        "--frames",
        f.join("dorm").to_str().unwrap(),
        "--script",
        f.join("dorm.ann").to_str().unwrap(),
        "--press",
        "2:ss",
        "--press",
        "2:cc",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn replay_transcripts_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.tsv"), dir.path().join("b.tsv"));
    for p in [&a, &b] {
        let o = replay_to(p);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let text = String::from_utf8(ta).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_ms\tkind\tazimuth\tgain\tpayload_summary"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 5), "{text}");
    // The compass press cancels the sweep it interrupts.
    assert!(rows.iter().any(|r| r[1] == "cancel"), "{text}");
    assert!(rows.iter().any(|r| r[1] == "preamble:scene-sweep"), "{text}");
    let times: Vec<u64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn eval_prints_thirty_classes_and_total() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = (dir.path().join("gt"), dir.path().join("pred"));
    std::fs::create_dir_all(&gt).unwrap();
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::write(gt.join("a.txt"), "0 10 10 50 50\n13 100 100 150 140\n").unwrap();
    std::fs::write(pred.join("a.txt"), "0 10 10 50 50 0.9\n13 300 300 350 340 0.8\n").unwrap();
    let o = run(&["eval", "--gt", gt.to_str().unwrap(), "--pred", pred.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "category\tclass\tinstances\tpct_images\tmap50\tmap75\tmap");
    assert_eq!(rows.len(), 1 + 30 + 1);
    assert!(rows[31].starts_with("Total\t\t2\t"), "{}", rows[31]);
    let avatar: Vec<&str> = rows[1].split('\t').collect();
    assert_eq!(&avatar[..3], ["Avatars", "avatar", "1"]);
    assert_eq!(avatar[4], "1.0000");
    let button = rows.iter().find(|r| r.contains("\tbutton\t")).unwrap();
    assert!(button.ends_with("0.0000\t0.0000\t0.0000"), "{button}");
}

#[test]
fn missing_ingestion_path_is_a_config_error() {
    let o = run(&["serve", "--frames", "/no/such/frames", "--script", "x.ann"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/frames"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[ingestion]\nmode = \"video-file\"\npath = \"/no/such/clip.mp4\"\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "bench"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/clip.mp4"), "{}", stderr(&o));
}

#[test]
fn config_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[transport]\nport = 80\n\n[spatial]\nmin_gain = \"loud\"\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "eval", "--index", "x.tsv"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("c.toml:5:"), "{e}");

    let o = run(&["replay"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn unreadable_image_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..5 {
        let p = dir.path().join(format!("f{i}.png"));
        if i == 2 {
            std::fs::write(&p, b"not a png").unwrap();
        } else {
            image::RgbImage::from_pixel(8, 8, image::Rgb([i as u8 * 10, 0, 0])).save(&p).unwrap();
        }
    }
    let frames = load_image_dir(dir.path(), 10).unwrap();
    assert_eq!(frames.len(), 4);
    assert_eq!(frames.iter().map(|f| f.seq()).collect::<Vec<_>>(), [0, 1, 2, 3]);
    assert_eq!(frames[3].timestamp_ns(), 300_000_000);
    // Lexicographic order: f3 follows f1 once f2 is gone.
    assert_eq!(frames[2].pixel(0, 0), [30, 0, 0]);
}

#[test]
fn bench_mode_reports_stages() {
    let f = fixtures();
    let o = run(&[
        "bench",
        "--frames",
        f.join("dorm").to_str().unwrap(),
        "--script",
        f.join("dorm.ann").to_str().unwrap(),
        "--duration",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("# frames=60 dispatches=2\n"), "{text}");
    for stage in ["detect\t", "edge\t", "depth\t", "dispatch\t"] {
        assert!(text.lines().any(|l| l.starts_with(stage)), "{stage}: {text}");
    }
}

#[test]
fn augment_writes_train_copies_only() {
    let dir = tempfile::tempdir().unwrap();
    let (imgs, labels, out) = (dir.path().join("img"), dir.path().join("gt"), dir.path().join("aug"));
    std::fs::create_dir_all(&imgs).unwrap();
    std::fs::create_dir_all(&labels).unwrap();
    let mut index = String::new();
    for i in 0..10 {
        image::RgbImage::from_pixel(32, 32, image::Rgb([50, 60, 70]))
            .save(imgs.join(format!("im{i}.png")))
            .unwrap();
        std::fs::write(labels.join(format!("im{i}.txt")), "0 4 4 20 20\n").unwrap();
        index.push_str(&format!("im{i}\tWorld\tgt/im{i}.txt\n"));
    }
    std::fs::write(dir.path().join("index.tsv"), index).unwrap();
    let o = run(&[
        "augment",
        "--index",
        dir.path().join("index.tsv").to_str().unwrap(),
        "--images",
        imgs.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pngs = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    // 7 train images, 3 copies each.
    assert_eq!(pngs, 21);
}

#[test]
fn serve_answers_keypresses_and_quits_on_stdin() {
    let f = fixtures();
    let mut child = bin()
        .args([
            "--log",
            "info",
            "serve",
            "--port",
            "0",
            "--frames",
            f.join("dorm").to_str().unwrap(),
            "--script",
            f.join("dorm.ann").to_str().unwrap(),
        ])
        .stdin(Stdio::piped())
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    let url = loop {
        line.clear();
        assert!(err.read_line(&mut line).unwrap() > 0, "serve exited early");
        if let Some(i) = line.find("listening on ") {
            break line[i + "listening on ".len()..].trim().to_string();
        }
    };
    std::thread::spawn(move || for _ in err.lines() {});

    let (mut c, _) = TestClient::connect_established(&url).unwrap();
    std::thread::sleep(Duration::from_millis(200));
    c.send(&Packet::Keypress { key: 1 }).unwrap();
    let wait = Duration::from_secs(5);
    let Packet::CueBatch(pre) = c.recv_packet(wait).unwrap() else { panic!("expected preamble") };
    assert_eq!(pre.cues.len(), 1);
    let Packet::CueBatch(sweep) = c.recv_packet(wait).unwrap() else { panic!("expected sweep") };
    assert_eq!(sweep.cues.len(), 4, "{sweep:?}");

    // Stdin commands reach the same engine.
    child.stdin.as_mut().unwrap().write_all(b"aa\n").unwrap();
    let mut got = Vec::new();
    while got.len() < 2 {
        match c.recv_packet(wait).unwrap() {
            Packet::CueBatch(b) => got.push(b),
            Packet::CancelBatch { .. } => {}
            p => panic!("{p:?}"),
        }
    }
    child.stdin.as_mut().unwrap().write_all(b"quit\n").unwrap();
    let t0 = Instant::now();
    let status = loop {
        if let Some(s) = child.try_wait().unwrap() {
            break s;
        }
        assert!(t0.elapsed() < Duration::from_secs(5), "serve did not exit");
        std::thread::sleep(Duration::from_millis(20));
    };
    assert!(status.success());
}

#[test]
fn example_config_parses() {
    let p = fixtures().join("dorm.toml");
    let c = EngineConfig::load(&p).unwrap();
    c.validate().unwrap();
    c.check_paths(true).unwrap();
}
