//! Loading a data directory into aligned frames and levels, and cutting it
//! into train/validation/test windows.

use std::fs;
use std::path::{Path, PathBuf};

use raincast_core::grid_io::{parse_rpg_stack, read_level_csv, LevelSeries, PrecipFrame};
use raincast_core::preprocess::{
    aggregate_temporal, clip_at, clip_origin, make_windows, purge_boundaries, sma_smooth, split_dataset, Mode,
    SampleSet,
};

use crate::{CliError, RunConfig};

pub const RADAR_FILE: &str = "radar.rpgs";
pub const LEVEL_FILE: &str = "levels.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// A data directory after parsing, aggregation, clipping and smoothing.
#[derive(Clone, Debug)]
pub struct Dataset {
    /// Frames as stored on disk.
    pub raw_frames: Vec<PrecipFrame>,
    /// Aggregated to the level interval and clipped to the catchment window.
    pub frames: Vec<PrecipFrame>,
    pub raw_levels: LevelSeries,
    /// Smoothed levels; these are what the models see and are scored on.
    pub levels: LevelSeries,
}

/// Train, validation and test windows for one horizon, boundary-purged.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: SampleSet,
    pub val: SampleSet,
    pub test: SampleSet,
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(CliError::io(path))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    fs::write(path, bytes).map_err(CliError::io(path))
}

fn format_err(path: PathBuf) -> impl FnOnce(raincast_core::grid_io::GridIoError) -> CliError {
    move |source| CliError::Format { path, source }
}

/// Parses the radar stack and level CSV without further processing.
pub fn load_raw(cfg: &RunConfig) -> Result<(Vec<PrecipFrame>, LevelSeries), CliError> {
    let dir = cfg.data_dir();
    let level_path = dir.join(LEVEL_FILE);
    let text = String::from_utf8_lossy(&read_file(&level_path)?).into_owned();
    let levels = read_level_csv(&text).map_err(format_err(level_path))?;
    let radar_path = dir.join(RADAR_FILE);
    let frames = parse_rpg_stack(&read_file(&radar_path)?).map_err(format_err(radar_path))?;
    Ok((frames, levels))
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let (raw_frames, raw_levels) = load_raw(cfg)?;
    let agg = aggregate_temporal(&raw_frames, cfg.parse("agg_k")?)?;
    let clip = cfg.clip()?;
    let frames = match agg.first() {
        None => Vec::new(),
        Some(f) => {
            let (r0, c0) = clip_origin(&clip, &cfg.grid_meta()?, f.height, f.width)?;
            agg.iter().map(|f| clip_at(f, r0, c0, clip.win_h, clip.win_w)).collect()
        }
    };
    let levels = sma_smooth(&raw_levels, cfg.parse("sma_window")?)?;
    Ok(Dataset {
        raw_frames,
        frames,
        raw_levels,
        levels,
    })
}

impl Dataset {
    pub fn windows(&self, lookback: usize, horizon: usize, mode: Mode) -> Result<SampleSet, CliError> {
        Ok(make_windows(&self.frames, &self.levels, lookback, horizon, mode)?)
    }

    pub fn splits(&self, cfg: &RunConfig, horizon: usize, mode: Mode) -> Result<Splits, CliError> {
        let all = self.windows(cfg.parse("lookback")?, horizon, mode)?;
        let (a, b, c) = split_dataset(&all, &cfg.split()?)?;
        let mut parts = purge_boundaries(&[a, b, c]).into_iter();
        let (train, val, test) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
        Ok(Splits { train, val, test })
    }

    /// Index of the clipped frame stamped `t`, if any.
    pub fn frame_index(&self, t: i64) -> Option<usize> {
        let first = self.frames.first()?.timestamp;
        let step = self.levels.step_s;
        if t < first || (t - first) % step != 0 {
            return None;
        }
        let k = ((t - first) / step) as usize;
        (self.frames.get(k)?.timestamp == t).then_some(k)
    }
}

/// `{model}_h{H}` stem shared by checkpoints and loss curves.
pub fn artifact_stem(model: &str, horizon: usize) -> String {
    format!("{model}_h{horizon}")
}

pub fn checkpoint_path(cfg: &RunConfig, model: &str, horizon: usize) -> PathBuf {
    cfg.out_dir().join(format!("{}.ckpt", artifact_stem(model, horizon)))
}
