//! Synthetic storms and a linear-reservoir catchment.
//!
//! Rain cells are born by a Poisson process at the fine (radar) frame
//! interval, drift across the grid with a Gaussian footprint and a
//! half-sine intensity envelope. The catchment responds only to the
//! grid-mean rain aggregated to the level interval:
//!
//! ```text
//! s[t]     = k · s[t−1] + gain · rain_mean[t]
//! level[t] = max(0, base + seasonal(t) + s[t] + noise_sd · N(0, 1))
//! ```
//!
//! Every random draw comes from a stream derived from the seed and the
//! draw's position, so changing one parameter never shifts unrelated draws.

use thiserror::Error;

use crate::grid_io::{round_to_f32, GridMeta, LevelSeries, PrecipFrame};
use crate::preprocess::{aggregate_temporal, make_windows, Mode, PreprocessError, SampleSet};
use crate::rng::{derive_seed, poisson_from_uniform, Rng};

/// 2020-01-01T00:00:00Z, the first level timestamp of generated data.
pub const SYNTH_START: i64 = 1_577_836_800;
/// Level (and aggregated rain) interval in seconds.
pub const LEVEL_STEP_S: i64 = 900;

const BIRTH_TAG: u64 = 1;
const NOISE_TAG: u64 = 2;
/// Cells below this depth are set to zero, as radar products do.
const RAIN_FLOOR_MM: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("{n_steps} steps is too short for lookback {lookback} and horizon {horizon}")]
    TooShort { n_steps: usize, lookback: usize, horizon: usize },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

impl SynthError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::TooShort { .. } => "TooShort",
            Self::InvalidSpec(_) => "InvalidSpec",
            Self::Preprocess(e) => e.code(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StormSpec {
    pub height: usize,
    pub width: usize,
    /// Fine frames per level step; the pipeline sums them back together.
    pub substeps: usize,
    /// Expected storm births per fine frame.
    pub rate: f64,
    /// Mean peak intensity in mm per fine frame.
    pub amplitude_mm: f64,
    pub sigma_cells: f64,
    /// Drift in cells per fine frame, (rows, cols).
    pub drift: (f64, f64),
    /// Mean storm lifetime in fine frames.
    pub mean_duration: f64,
    pub cell_km: f32,
    pub seed: u64,
}

impl Default for StormSpec {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            substeps: 3,
            rate: 0.015,
            amplitude_mm: 3.0,
            sigma_cells: 3.0,
            drift: (0.05, 0.1),
            mean_duration: 36.0,
            cell_km: 1.0,
            seed: 42,
        }
    }
}

impl StormSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.height == 0 || self.width == 0 || self.height > u16::MAX as usize || self.width > u16::MAX as usize {
            return bad("grid extents must be in 1..=65535");
        }
        if self.substeps == 0 {
            return bad("substeps must be at least 1");
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return bad("rate must be finite and non-negative");
        }
        if !(self.amplitude_mm >= 0.0 && self.amplitude_mm.is_finite()) {
            return bad("amplitude must be finite and non-negative");
        }
        if !(self.sigma_cells > 0.0 && self.sigma_cells.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(self.mean_duration >= 1.0 && self.mean_duration.is_finite()) {
            return bad("mean duration must be at least one frame");
        }
        if !(self.drift.0.is_finite() && self.drift.1.is_finite()) {
            return bad("drift must be finite");
        }
        if !(self.cell_km > 0.0 && self.cell_km.is_finite()) {
            return bad("cell_km must be positive");
        }
        Ok(())
    }

    pub fn frame_s(&self) -> i64 {
        LEVEL_STEP_S / self.substeps as i64
    }

    /// Geographic frame of the generated grid: 0.01° rows, 0.015° columns.
    pub fn grid_meta(&self) -> GridMeta {
        GridMeta {
            origin_lat: 51.9,
            origin_lon: 10.4,
            lat_step: -0.01,
            lon_step: 0.015,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReservoirSpec {
    pub k_decay: f64,
    pub gain_cm_per_mm: f64,
    pub base_level_cm: f64,
    pub noise_sd_cm: f64,
    /// Amplitude of a slow sinusoidal baseflow swing; 0 disables it.
    pub seasonal_amp_cm: f64,
    /// Period of that swing in level steps.
    pub seasonal_period_steps: f64,
}

impl Default for ReservoirSpec {
    fn default() -> Self {
        Self {
            k_decay: 0.92,
            gain_cm_per_mm: 1.5,
            base_level_cm: 40.0,
            noise_sd_cm: 0.5,
            seasonal_amp_cm: 25.0,
            seasonal_period_steps: 8760.0,
        }
    }
}

impl ReservoirSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if !(self.k_decay > 0.0 && self.k_decay < 1.0) {
            return bad("k_decay must lie in (0, 1)");
        }
        if !(self.gain_cm_per_mm >= 0.0 && self.gain_cm_per_mm.is_finite()) {
            return bad("gain must be finite and non-negative");
        }
        if !(self.base_level_cm >= 0.0 && self.base_level_cm.is_finite()) {
            return bad("base level must be finite and non-negative");
        }
        if !(self.noise_sd_cm >= 0.0 && self.noise_sd_cm.is_finite()) {
            return bad("noise sd must be finite and non-negative");
        }
        if !(self.seasonal_amp_cm >= 0.0 && self.seasonal_amp_cm.is_finite()) {
            return bad("seasonal amplitude must be finite and non-negative");
        }
        if !(self.seasonal_period_steps > 0.0) {
            return bad("seasonal period must be positive");
        }
        Ok(())
    }

    fn seasonal(&self, t: usize) -> f64 {
        if self.seasonal_amp_cm == 0.0 {
            0.0
        } else {
            self.seasonal_amp_cm * libm::sin(2.0 * std::f64::consts::PI * t as f64 / self.seasonal_period_steps)
        }
    }
}

struct Storm {
    born: i64,
    duration: i64,
    row: f64,
    col: f64,
    sigma: f64,
    peak: f64,
}

impl Storm {
    fn draw(spec: &StormSpec, born: i64, index: u64) -> Storm {
        let mut rng = Rng::new(derive_seed(&[spec.seed, BIRTH_TAG, born as u64, index + 1]));
        let row = rng.uniform_in(-2.0, spec.height as f64 + 2.0);
        let col = rng.uniform_in(-2.0, spec.width as f64 + 2.0);
        let sigma = spec.sigma_cells * rng.uniform_in(0.7, 1.3);
        let peak = spec.amplitude_mm * rng.uniform_in(0.5, 1.5);
        // Geometric lifetime with the requested mean, at least one frame.
        let p = 1.0 / spec.mean_duration;
        let duration = if p >= 1.0 {
            1
        } else {
            let u = 1.0 - rng.uniform();
            (libm::ceil(libm::log(u) / libm::log(1.0 - p)) as i64).max(1)
        };
        Storm {
            born,
            duration,
            row,
            col,
            sigma,
            peak,
        }
    }

    fn paint(&self, spec: &StormSpec, frame: i64, out: &mut [f64]) {
        let age = (frame - self.born) as f64;
        let envelope = libm::sin(std::f64::consts::PI * (age + 0.5) / self.duration as f64);
        let peak = self.peak * envelope;
        if peak <= 0.0 {
            return;
        }
        let (r, c) = (self.row + spec.drift.0 * age, self.col + spec.drift.1 * age);
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        for i in 0..spec.height {
            let dy = i as f64 - r;
            for j in 0..spec.width {
                let dx = j as f64 - c;
                out[i * spec.width + j] += peak * libm::exp(-(dy * dy + dx * dx) * inv);
            }
        }
    }
}

/// `n_frames` fine frames of drifting Gaussian rain cells. Values are rounded
/// to f32 so they survive the RPG1 codec unchanged.
pub fn gen_storm_field(spec: &StormSpec, n_frames: usize) -> Result<Vec<PrecipFrame>, SynthError> {
    spec.validate()?;
    // Start the birth process early enough that the field is stationary at frame 0.
    let warmup = (spec.mean_duration * 8.0).ceil() as i64;
    let mut active: Vec<Storm> = Vec::new();
    let frame_s = spec.frame_s();
    let first_ts = SYNTH_START - (spec.substeps as i64 - 1) * frame_s;
    let mut frames = Vec::with_capacity(n_frames);
    for f in -warmup..n_frames as i64 {
        let mut birth_rng = Rng::new(derive_seed(&[spec.seed, BIRTH_TAG, f as u64, 0]));
        let births = poisson_from_uniform(birth_rng.uniform(), spec.rate);
        active.extend((0..births).map(|j| Storm::draw(spec, f, j)));
        active.retain(|s| f < s.born + s.duration);
        if f < 0 {
            continue;
        }
        let mut values = vec![0.0; spec.height * spec.width];
        for s in &active {
            s.paint(spec, f, &mut values);
        }
        for v in &mut values {
            if *v < RAIN_FLOOR_MM {
                *v = 0.0;
            }
        }
        let frame = PrecipFrame {
            timestamp: first_ts + f * frame_s,
            width: spec.width,
            height: spec.height,
            cell_km: spec.cell_km,
            values,
        };
        frames.push(round_to_f32(frame));
    }
    Ok(frames)
}

/// Drives the reservoir with per-step catchment-mean rain.
pub fn linear_reservoir(rain_mean: &[f64], spec: &ReservoirSpec, seed: u64, start: i64, step_s: i64) -> Result<LevelSeries, SynthError> {
    spec.validate()?;
    if let Some(bad) = rain_mean.iter().find(|r| !r.is_finite()) {
        return Err(SynthError::InvalidSpec(format!("non-finite rain {bad}")));
    }
    let mut noise = Rng::new(derive_seed(&[seed, NOISE_TAG]));
    let mut s = 0.0;
    let values = rain_mean
        .iter()
        .enumerate()
        .map(|(t, &r)| {
            s = spec.k_decay * s + spec.gain_cm_per_mm * r;
            let eps = if spec.noise_sd_cm > 0.0 { spec.noise_sd_cm * noise.normal() } else { 0.0 };
            (spec.base_level_cm + spec.seasonal(t) + s + eps).max(0.0)
        })
        .collect();
    LevelSeries::new("synthetic", start, step_s, values).map_err(|e| SynthError::InvalidSpec(e.to_string()))
}

/// Everything a generated catchment consists of.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    /// Fine frames as a radar would deliver them.
    pub raw_frames: Vec<PrecipFrame>,
    /// Frames summed to the level interval.
    pub frames: Vec<PrecipFrame>,
    pub rain_mean: Vec<f64>,
    pub levels: LevelSeries,
    pub samples: SampleSet,
}

/// Generates `n_steps` level steps of storms and reservoir response and
/// windows them with lookback `lookback` and horizon `horizon`.
pub fn gen_dataset(
    storm: &StormSpec,
    reservoir: &ReservoirSpec,
    n_steps: usize,
    lookback: usize,
    horizon: usize,
    mode: Mode,
) -> Result<SynthDataset, SynthError> {
    if n_steps <= lookback + horizon {
        return Err(SynthError::TooShort {
            n_steps,
            lookback,
            horizon,
        });
    }
    reservoir.validate()?;
    let raw_frames = gen_storm_field(storm, n_steps * storm.substeps)?;
    let frames = aggregate_temporal(&raw_frames, storm.substeps)?;
    let rain_mean: Vec<f64> = frames.iter().map(PrecipFrame::mean_mm).collect();
    let levels = linear_reservoir(&rain_mean, reservoir, storm.seed, SYNTH_START, LEVEL_STEP_S)?;
    let samples = make_windows(&frames, &levels, lookback, horizon, mode)?;
    Ok(SynthDataset {
        raw_frames,
        frames,
        rain_mean,
        levels,
        samples,
    })
}
