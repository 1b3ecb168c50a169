use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use raincast_core::grid_io::{write_level_csv, write_rpg_stack, LevelSeries, PrecipFrame};
use raincast_core::model::ModelParams;
use raincast_core::preprocess::Mode;
use raincast_cli::RunConfig;

const TINY: &str = "\
synth_steps = 1200
synth_height = 8
synth_width = 8
clip_h = 8
clip_w = 8
clip_lat = 51.86
clip_lon = 10.46
conv_channels = 2
lstm_hidden = 4
lookback = 8
horizons = 4
epochs = 2
batch_size = 32
";

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
        Run { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn raincast(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_raincast"))
            .args(args)
            .args(["--config", "tiny.cfg", "--data", "data", "--out", "out"])
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.raincast(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    fn fails_with(&self, args: &[&str], code: &str) {
        let out = self.raincast(args);
        assert!(!out.status.success(), "{args:?} succeeded");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.starts_with(&format!("error[{code}]: ")), "{args:?}: {err}");
    }

    fn config(&self) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.apply_text(TINY).unwrap();
        cfg.set("data_dir", self.path("data").to_str().unwrap()).unwrap();
        cfg.set("out_dir", self.path("out").to_str().unwrap()).unwrap();
        cfg
    }
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

/// Data lines of a CSV with the provenance comment dropped.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn synth_is_reproducible_and_documented() {
    let run = Run::new();
    run.ok(&["synth"]);
    let manifest = read(&run.path("data/manifest.txt"));
    assert!(manifest.contains("frames=3600\n"));
    assert!(manifest.contains("seed=42\n"));
    let hash = run.config().hash();
    assert!(manifest.contains(&format!("config_hash={hash}\n")));
    let radar = fs::read(run.path("data/radar.rpgs")).unwrap();
    let levels = fs::read(run.path("data/levels.csv")).unwrap();

    run.ok(&["synth"]);
    assert_eq!(fs::read(run.path("data/radar.rpgs")).unwrap(), radar);
    assert_eq!(fs::read(run.path("data/levels.csv")).unwrap(), levels);
    assert_eq!(read(&run.path("data/manifest.txt")), manifest);

    run.ok(&["synth", "--seed", "7"]);
    assert_ne!(fs::read(run.path("data/levels.csv")).unwrap(), levels);
}

#[test]
fn short_synth_is_rejected() {
    let run = Run::new();
    run.fails_with(&["synth", "--set", "synth_steps=12"], "TooShort");
}

#[test]
fn config_problems_are_reported() {
    let run = Run::new();
    run.fails_with(&["synth", "--set", "no_such_key=1"], "ConfigError");
    run.fails_with(&["synth", "--mode", "sideways"], "ConfigError");
    let out = Command::new(env!("CARGO_BIN_EXE_raincast"))
        .args(["synth", "--config", "missing.cfg"])
        .current_dir(run.dir.path())
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[IoError]"));
}

#[test]
fn missing_inputs() {
    let run = Run::new();
    run.fails_with(&["train"], "IoError");
    run.fails_with(&["ingest"], "IoError");
    run.ok(&["synth"]);
    run.fails_with(&["evaluate"], "MissingCheckpoint");
    run.fails_with(&["forecast"], "MissingCheckpoint");
    fs::write(run.path("data/levels.csv"), "when,level\n").unwrap();
    run.fails_with(&["train"], "BadCsvHeader");
}

#[test]
fn train_evaluate_forecast() {
    let run = Run::new();
    run.ok(&["synth"]);
    run.ok(&["ingest"]);
    let diag = read(&run.path("out/diagnostics.csv"));
    assert!(diag.contains("corr_rain_change,"));
    assert_eq!(rows(&read(&run.path("out/ingest_frames.csv"))).len(), 3600);

    let start = std::time::Instant::now();
    run.ok(&["train"]);
    assert!(start.elapsed().as_secs() < 60);
    let ckpt = fs::read(run.path("out/strpmr_h4.ckpt")).unwrap();
    let curve = read(&run.path("out/strpmr_h4_loss.csv"));
    let prov = run.config().provenance();
    assert!(curve.starts_with(&format!("# {prov}\nepoch,")));
    assert_eq!(rows(&curve).len(), 2);
    assert!(String::from_utf8_lossy(&ckpt).contains(&format!("config_hash={}", run.config().hash())));

    run.ok(&["train"]);
    assert_eq!(fs::read(run.path("out/strpmr_h4.ckpt")).unwrap(), ckpt);

    run.ok(&["evaluate"]);
    let metrics = read(&run.path("out/metrics.csv"));
    assert!(metrics.starts_with(&format!("# {prov}\n")));
    let r = rows(&metrics);
    assert_eq!(r.len(), 2);
    assert_eq!((r[0][0].as_str(), r[1][0].as_str()), ("baseline", "strpmr"));

    run.ok(&["forecast"]);
    let f = rows(&read(&run.path("out/forecast.csv")));
    assert_eq!(f.len(), 2);
    let num = |s: &str| s.parse::<f64>().unwrap();
    for row in &f {
        let (anchor, level) = (num(&row[4]), num(&row[6]));
        match row[0].as_str() {
            "baseline" => assert_eq!(level, anchor),
            _ => assert!((level - (anchor + num(&row[5]))).abs() < 1e-9),
        }
    }

    run.fails_with(&["forecast", "--issue-time", "1577836800"], "InsufficientHistory");
    run.fails_with(&["evaluate", "--horizon", "6"], "MissingCheckpoint");
}

#[test]
fn zero_weight_checkpoint_scores_like_baseline() {
    let run = Run::new();
    run.ok(&["synth"]);
    let cfg = run.config();
    let spec = cfg.model_spec(4, Mode::Residual).unwrap();
    let bytes = ModelParams::zeros(&spec).unwrap().to_checkpoint(&[]).to_bytes().unwrap();
    fs::create_dir_all(run.path("out")).unwrap();
    fs::write(run.path("out/strpmr_h4.ckpt"), bytes).unwrap();
    run.ok(&["evaluate"]);
    let r = rows(&read(&run.path("out/metrics.csv")));
    assert_eq!(r[0][1..], r[1][1..]);
}

#[test]
fn baseline_on_constant_levels() {
    let run = Run::new();
    let frames: Vec<PrecipFrame> = (0..600)
        .map(|i| PrecipFrame::new(i * 300, 8, 8, 1.0, vec![0.5; 64]).unwrap())
        .collect();
    let levels = LevelSeries::new("", 300 * 2, 900, vec![50.0; 200]).unwrap();
    fs::create_dir_all(run.path("data")).unwrap();
    fs::write(run.path("data/radar.rpgs"), write_rpg_stack(&frames).unwrap()).unwrap();
    fs::write(run.path("data/levels.csv"), write_level_csv(&levels)).unwrap();
    run.ok(&["evaluate", "--set", "eval_models=baseline"]);
    let r = rows(&read(&run.path("out/metrics.csv")));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][3], "0");
    assert_eq!(r[0][6], "");
    assert!(r[0].last().unwrap().contains("nse:DegenerateObserved"));
}
