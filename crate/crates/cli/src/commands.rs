//! The five subcommands. Each returns a short human-readable summary; files
//! go to the data directory (`synth`) or the output directory (the rest).

use std::fmt::Write as _;

use raincast_core::grid_io::{write_level_csv, write_rpg_stack};
use raincast_core::metrics::{evaluate_row, report_csv, EventConfig, ReportRow};
use raincast_core::model::{
    persistence_forecast, predict, strpm_forward, strpmr_forward, train, Forecast, ModelParams,
};
use raincast_core::preprocess::{rain_level_correlation, Mode, SampleSet};
use raincast_core::synth::gen_dataset;
use raincast_tensor::Checkpoint;
use sha2::{Digest, Sha256};

use crate::pipeline::{
    artifact_stem, checkpoint_path, load_dataset, load_raw, read_file, write_file, Dataset, LEVEL_FILE,
    MANIFEST_FILE, RADAR_FILE,
};
use crate::{CliError, RunConfig};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn model_mode(model: &str) -> Option<Mode> {
    match model {
        "strpm" => Some(Mode::Absolute),
        "strpmr" => Some(Mode::Residual),
        _ => None,
    }
}

/// Generates a synthetic catchment into the data directory.
pub fn synth(cfg: &RunConfig) -> Result<String, CliError> {
    let storm = cfg.storm_spec()?;
    let reservoir = cfg.reservoir_spec()?;
    let n_steps: usize = cfg.parse("synth_steps")?;
    let lookback: usize = cfg.parse("lookback")?;
    let horizon = cfg.horizons()?.into_iter().max().unwrap_or(1);
    let ds = gen_dataset(&storm, &reservoir, n_steps, lookback, horizon, cfg.mode()?)?;

    let dir = cfg.data_dir();
    let radar = write_rpg_stack(&ds.raw_frames).map_err(|source| CliError::Format {
        path: dir.join(RADAR_FILE),
        source,
    })?;
    let levels = write_level_csv(&ds.levels);
    write_file(&dir.join(RADAR_FILE), &radar)?;
    write_file(&dir.join(LEVEL_FILE), &levels)?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "config_hash={}", cfg.hash());
    let _ = writeln!(manifest, "seed={}", cfg.get("seed"));
    let _ = writeln!(manifest, "n_steps={n_steps}");
    let _ = writeln!(manifest, "frames={}", ds.raw_frames.len());
    let _ = writeln!(manifest, "frame_s={}", storm.frame_s());
    let _ = writeln!(manifest, "grid={}x{}", storm.height, storm.width);
    let _ = writeln!(manifest, "sha256.{RADAR_FILE}={}", sha256_hex(&radar));
    let _ = writeln!(manifest, "sha256.{LEVEL_FILE}={}", sha256_hex(levels.as_bytes()));
    for line in cfg.canonical().lines() {
        let _ = writeln!(manifest, "config.{line}");
    }
    write_file(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(format!(
        "wrote {} frames and {} levels to {}",
        ds.raw_frames.len(),
        ds.levels.len(),
        dir.display()
    ))
}

/// Per-frame data quality and the rain/level correlation diagnostics.
pub fn ingest(cfg: &RunConfig) -> Result<String, CliError> {
    let (raw, raw_levels) = load_raw(cfg)?;
    let ds = load_dataset(cfg)?;
    let out = cfg.out_dir();
    let prov = cfg.provenance();

    let mut frames_csv = format!("# {prov}\ntimestamp,missing_cells,mean_mm\n");
    for f in &raw {
        let _ = writeln!(frames_csv, "{},{},{}", f.timestamp, f.missing_count(), f.mean_mm());
    }
    write_file(&out.join("ingest_frames.csv"), &frames_csv)?;

    let window: usize = cfg.parse("diag_lag")?;
    let (rain, levels) = aligned_rain(&ds);
    let (c_level, c_change) = rain_level_correlation(&rain, &levels, window)?;
    let missing_levels = raw_levels.values.iter().filter(|v| v.is_nan()).count();
    let missing_cells: usize = raw.iter().map(|f| f.missing_count()).sum();
    let mut diag = format!("# {prov}\nkey,value\n");
    let _ = writeln!(diag, "raw_frames,{}", raw.len());
    let _ = writeln!(diag, "aggregated_frames,{}", ds.frames.len());
    let _ = writeln!(diag, "missing_cells,{missing_cells}");
    let _ = writeln!(diag, "level_steps,{}", raw_levels.len());
    let _ = writeln!(diag, "missing_levels,{missing_levels}");
    let _ = writeln!(diag, "corr_window_steps,{window}");
    let _ = writeln!(diag, "corr_rain_level,{c_level}");
    let _ = writeln!(diag, "corr_rain_change,{c_change}");
    write_file(&out.join("diagnostics.csv"), &diag)?;
    Ok(format!(
        "{} frames, {missing_cells} missing cells, {missing_levels} missing levels; corr(rain, level) {c_level:.3}, corr(rain, change) {c_change:.3}",
        raw.len()
    ))
}

/// Catchment-mean rain of each clipped frame with the smoothed level at the
/// same time (NaN where the series has no value).
fn aligned_rain(ds: &Dataset) -> (Vec<f64>, Vec<f64>) {
    ds.frames
        .iter()
        .map(|f| {
            let level = ds.levels.index_of(f.timestamp).map_or(f64::NAN, |j| ds.levels.values[j]);
            (f.mean_mm(), level)
        })
        .unzip()
}

/// Trains one model per configured horizon.
pub fn train_cmd(cfg: &RunConfig) -> Result<String, CliError> {
    let ds = load_dataset(cfg)?;
    let mode = cfg.mode()?;
    let tcfg = cfg.train_config()?;
    let out = cfg.out_dir();
    let mut summary = String::new();
    for h in cfg.horizons()? {
        let spec = cfg.model_spec(h, mode)?;
        let s = ds.splits(cfg, h, mode)?;
        let outcome = train(&spec, &s.train, &s.val, &tcfg)?;
        let ckpt = outcome.params.to_checkpoint(&[
            ("config_hash", cfg.hash()),
            ("seed", cfg.get("seed").to_string()),
            ("best_epoch", outcome.best_epoch.to_string()),
        ]);
        let bytes = ckpt.to_bytes().map_err(|source| CliError::Checkpoint {
            path: checkpoint_path(cfg, mode.model_name(), h),
            source,
        })?;
        write_file(&checkpoint_path(cfg, mode.model_name(), h), bytes)?;

        let mut curve = format!("# {}\nepoch,train_mse,train_mae,val_mse,val_mae\n", cfg.provenance());
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &outcome.curve {
            let _ = writeln!(curve, "{},{},{},{},{}", e.epoch, e.train_mse, e.train_mae, opt(e.val_mse), opt(e.val_mae));
        }
        let stem = artifact_stem(mode.model_name(), h);
        write_file(&out.join(format!("{stem}_loss.csv")), curve)?;
        let best = &outcome.curve[outcome.best_epoch - 1];
        let _ = writeln!(
            summary,
            "{stem}: {} train / {} val windows, best epoch {} (val mse {})",
            s.train.len(),
            s.val.len(),
            outcome.best_epoch,
            opt(best.val_mse)
        );
    }
    Ok(summary.trim_end().to_string())
}

/// Loads `{model}_h{H}.ckpt` and checks it fits the configured windows.
pub fn load_checkpoint(cfg: &RunConfig, model: &str, horizon: usize) -> Result<ModelParams, CliError> {
    let path = checkpoint_path(cfg, model, horizon);
    if !path.is_file() {
        return Err(CliError::MissingCheckpoint(path));
    }
    let ckpt = Checkpoint::from_bytes(&read_file(&path)?).map_err(|source| CliError::Checkpoint {
        path: path.clone(),
        source,
    })?;
    let params = ModelParams::from_checkpoint(&ckpt)?;
    let lookback: usize = cfg.parse("lookback")?;
    if params.spec.horizon != horizon || params.spec.lookback != lookback || Some(params.spec.mode) != model_mode(model) {
        return Err(CliError::Config(format!(
            "{} holds a {} model for lookback {} and horizon {}",
            path.display(),
            params.spec.mode.model_name(),
            params.spec.lookback,
            params.spec.horizon
        )));
    }
    Ok(params)
}

/// Level forecasts of `model` for every window of `samples`.
pub fn model_forecasts(
    cfg: &RunConfig,
    model: &str,
    samples: &SampleSet,
) -> Result<Vec<Forecast>, CliError> {
    match model_mode(model) {
        None => samples
            .anchor_levels
            .iter()
            .zip(&samples.issue_times)
            .map(|(&a, &t)| Ok(persistence_forecast(a, samples.horizon_steps, t)?))
            .collect(),
        Some(mode) => {
            let params = load_checkpoint(cfg, model, samples.horizon_steps)?;
            Ok(predict(&params, &samples.with_mode(mode), cfg.parse("eval_batch")?)?)
        }
    }
}

/// Scores every configured model on the test split of every horizon.
pub fn evaluate(cfg: &RunConfig) -> Result<String, CliError> {
    let models = cfg.eval_models()?;
    let horizons = cfg.horizons()?;
    // fail before any heavy work when a learned model was never trained
    for m in models.iter().filter(|m| model_mode(m).is_some()) {
        for &h in &horizons {
            let p = checkpoint_path(cfg, m, h);
            if !p.is_file() {
                return Err(CliError::MissingCheckpoint(p));
            }
        }
    }
    let ds = load_dataset(cfg)?;
    let mode = cfg.mode()?;
    let mut rows: Vec<ReportRow> = Vec::new();
    for &h in &horizons {
        let test = ds.splits(cfg, h, mode)?.test;
        let obs: Vec<f64> = (0..test.len()).map(|i| test.future_level(i)).collect();
        let events = cfg.event_config(EventConfig::years_for(test.len(), test.step_s))?;
        for m in &models {
            let pred: Vec<f64> = model_forecasts(cfg, m, &test)?
                .iter()
                .map(|f| f.predicted_level_cm)
                .collect();
            rows.push(evaluate_row(m, h, &obs, &pred, &events)?);
        }
    }
    write_file(&cfg.out_dir().join("metrics.csv"), report_csv(&rows, &cfg.provenance()))?;
    let mut summary = String::new();
    for r in &rows {
        let nse = r.nse.map_or("-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(summary, "{:>8} h{:<3} n={} mse={:.4} nse={nse}", r.model, r.horizon_steps, r.n, r.mse);
    }
    Ok(summary.trim_end().to_string())
}

pub const FORECAST_COLUMNS: &str =
    "model,issue_time,horizon_steps,target_time,anchor_level_cm,predicted_residual_cm,predicted_level_cm,observed_level_cm";

/// Forecasts issued at `issue_time` (default: the last frame) for every
/// configured horizon and model.
pub fn forecast(cfg: &RunConfig, issue_time: Option<i64>) -> Result<String, CliError> {
    let models = cfg.eval_models()?;
    let horizons = cfg.horizons()?;
    let lookback: usize = cfg.parse("lookback")?;
    let ds = load_dataset(cfg)?;
    let t = match issue_time.or_else(|| ds.frames.last().map(|f| f.timestamp)) {
        Some(t) => t,
        None => {
            return Err(CliError::InsufficientHistory {
                issue_time: 0,
                available: 0,
                needed: lookback,
            })
        }
    };
    let k = ds.frame_index(t).ok_or(CliError::InsufficientHistory {
        issue_time: t,
        available: 0,
        needed: lookback,
    })?;
    if k + 1 < lookback {
        return Err(CliError::InsufficientHistory {
            issue_time: t,
            available: k + 1,
            needed: lookback,
        });
    }
    let anchor = ds
        .levels
        .index_of(t)
        .map(|j| ds.levels.values[j])
        .filter(|v| v.is_finite())
        .ok_or(CliError::InsufficientHistory {
            issue_time: t,
            available: k + 1,
            needed: lookback,
        })?;
    let mut inputs = Vec::with_capacity(lookback * ds.frames[k].values.len());
    for f in &ds.frames[k + 1 - lookback..=k] {
        inputs.extend(f.values.iter().map(|&v| if v.is_nan() { 0.0 } else { v }));
    }

    let step = ds.levels.step_s;
    let mut csv = format!("# {}\n{FORECAST_COLUMNS}\n", cfg.provenance());
    let mut n = 0;
    for &h in &horizons {
        let target_time = t + h as i64 * step;
        let observed = ds.levels.index_of(target_time).map_or(f64::NAN, |j| ds.levels.values[j]);
        for m in &models {
            let f = match model_mode(m) {
                None => persistence_forecast(anchor, h, t)?,
                Some(Mode::Residual) => strpmr_forward(&load_checkpoint(cfg, m, h)?, &inputs, anchor, t)?,
                Some(Mode::Absolute) => Forecast {
                    issue_time: t,
                    horizon_steps: h,
                    predicted_level_cm: strpm_forward(&load_checkpoint(cfg, m, h)?, &inputs)?,
                    predicted_residual_cm: None,
                    anchor_level_cm: anchor,
                },
            };
            let cell = |v: f64| if v.is_finite() { v.to_string() } else { String::new() };
            let _ = writeln!(
                csv,
                "{m},{},{},{target_time},{},{},{},{}",
                f.issue_time,
                f.horizon_steps,
                f.anchor_level_cm,
                f.predicted_residual_cm.map(cell).unwrap_or_default(),
                f.predicted_level_cm,
                cell(observed)
            );
            n += 1;
        }
    }
    write_file(&cfg.out_dir().join("forecast.csv"), csv)?;
    Ok(format!("{n} forecasts issued at {t}"))
}
