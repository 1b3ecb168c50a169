//! From raw frames and level series to aligned training samples.

use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::grid_io::{GridMeta, LevelSeries, PrecipFrame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("irregular frame spacing: {0}")]
    IrregularSpacing(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("too few samples: {0}")]
    TooFewSamples(usize),
    #[error("misaligned series: {0}")]
    MisalignedSeries(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl PreprocessError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::OutOfBounds(_) => "OutOfBounds",
            Self::ShapeMismatch(_) => "ShapeMismatch",
            Self::IrregularSpacing(_) => "IrregularSpacing",
            Self::DegenerateInput(_) => "DegenerateInput",
            Self::TooFewSamples(_) => "TooFewSamples",
            Self::MisalignedSeries(_) => "MisalignedSeries",
            Self::InvalidArgument(_) => "InvalidArgument",
        }
    }
}

type Result<T> = std::result::Result<T, PreprocessError>;

/// What the network is trained to predict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// The level itself (STRPM).
    Absolute,
    /// The change relative to the level at issue time (STRPMr).
    Residual,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Absolute => "absolute",
            Mode::Residual => "residual",
        }
    }

    /// Conventional model name for reports.
    pub fn model_name(self) -> &'static str {
        match self {
            Mode::Absolute => "strpm",
            Mode::Residual => "strpmr",
        }
    }
}

impl FromStr for Mode {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" | "strpm" => Ok(Mode::Absolute),
            "residual" | "strpmr" => Ok(Mode::Residual),
            _ => Err(PreprocessError::InvalidArgument(format!("mode '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipSpec {
    pub center_lat: f64,
    pub center_lon: f64,
    pub win_h: usize,
    pub win_w: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    /// Share of the training part used for fitting; the rest is validation.
    pub inner_train_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.6,
            inner_train_frac: 0.8,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train_frac", self.train_frac), ("inner_train_frac", self.inner_train_frac)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(PreprocessError::InvalidArgument(format!("{name} = {f}")));
            }
        }
        Ok(())
    }

    /// (train, val, test) sizes for `n` samples.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon keeps 0.6·10 from flooring to 5 through representation error.
        let outer = ((self.train_frac * n as f64) + 1e-9).floor() as usize;
        let train = ((self.inner_train_frac * outer as f64) + 1e-9).floor() as usize;
        (train, outer - train, n - outer)
    }
}

/// Nearest grid cell to a geographic point, checked against a `height`×`width` grid.
pub fn latlon_to_index(meta: &GridMeta, lat: f64, lon: f64, height: usize, width: usize) -> Result<(usize, usize)> {
    meta.validate()
        .map_err(|e| PreprocessError::InvalidArgument(e.to_string()))?;
    let r = ((lat - meta.origin_lat) / meta.lat_step).round();
    let c = ((lon - meta.origin_lon) / meta.lon_step).round();
    if !(r >= 0.0 && c >= 0.0 && r < height as f64 && c < width as f64) {
        return Err(PreprocessError::OutOfBounds(format!(
            "({lat}, {lon}) maps to ({r}, {c}) outside {height}x{width}"
        )));
    }
    Ok((r as usize, c as usize))
}

/// Cuts the `win_h`×`win_w` window whose centre cell (`win_h/2`, `win_w/2`)
/// lies at the requested coordinates.
pub fn clip_window(frame: &PrecipFrame, spec: &ClipSpec, meta: &GridMeta) -> Result<PrecipFrame> {
    let (r0, c0) = clip_origin(spec, meta, frame.height, frame.width)?;
    Ok(clip_at(frame, r0, c0, spec.win_h, spec.win_w))
}

/// Top-left source cell of the clip window.
pub fn clip_origin(spec: &ClipSpec, meta: &GridMeta, height: usize, width: usize) -> Result<(usize, usize)> {
    if spec.win_h == 0 || spec.win_w == 0 {
        return Err(PreprocessError::InvalidArgument("empty clip window".into()));
    }
    let (rc, cc) = latlon_to_index(meta, spec.center_lat, spec.center_lon, height, width)?;
    let (Some(r0), Some(c0)) = (rc.checked_sub(spec.win_h / 2), cc.checked_sub(spec.win_w / 2)) else {
        return Err(PreprocessError::OutOfBounds("window extends past the top or left edge".into()));
    };
    if r0 + spec.win_h > height || c0 + spec.win_w > width {
        return Err(PreprocessError::OutOfBounds("window extends past the bottom or right edge".into()));
    }
    Ok((r0, c0))
}

pub fn clip_at(frame: &PrecipFrame, r0: usize, c0: usize, win_h: usize, win_w: usize) -> PrecipFrame {
    let mut values = Vec::with_capacity(win_h * win_w);
    for r in r0..r0 + win_h {
        let row = r * frame.width;
        values.extend_from_slice(&frame.values[row + c0..row + c0 + win_w]);
    }
    PrecipFrame {
        timestamp: frame.timestamp,
        width: win_w,
        height: win_h,
        cell_km: frame.cell_km,
        values,
    }
}

/// Sums consecutive groups of `k` frames, missing cells as zero. Each output
/// carries the timestamp of the last frame in its group; a trailing partial
/// group is dropped.
pub fn aggregate_temporal(frames: &[PrecipFrame], k: usize) -> Result<Vec<PrecipFrame>> {
    if k == 0 {
        return Err(PreprocessError::InvalidArgument("k must be at least 1".into()));
    }
    if let Some(first) = frames.first() {
        let spacing = frames.get(1).map(|f| f.timestamp - first.timestamp);
        if spacing.is_some_and(|s| s <= 0) {
            return Err(PreprocessError::IrregularSpacing("timestamps not increasing".into()));
        }
        for (i, f) in frames.iter().enumerate() {
            if (f.width, f.height) != (first.width, first.height) {
                return Err(PreprocessError::ShapeMismatch(format!(
                    "frame {i} is {}x{}, expected {}x{}",
                    f.width, f.height, first.width, first.height
                )));
            }
            if let Some(s) = spacing {
                if f.timestamp != first.timestamp + i as i64 * s {
                    return Err(PreprocessError::IrregularSpacing(format!("frame {i} at {}", f.timestamp)));
                }
            }
        }
    }
    Ok(frames
        .chunks_exact(k)
        .map(|group| {
            let last = &group[k - 1];
            let mut values = vec![0.0; last.values.len()];
            for f in group {
                for (acc, &v) in values.iter_mut().zip(&f.values) {
                    if !v.is_nan() {
                        *acc += v;
                    }
                }
            }
            PrecipFrame {
                timestamp: last.timestamp,
                width: last.width,
                height: last.height,
                cell_km: last.cell_km,
                values,
            }
        })
        .collect())
}

/// Trailing simple moving average over the non-missing entries of each window.
pub fn sma_smooth(series: &LevelSeries, window: usize) -> Result<LevelSeries> {
    if window == 0 {
        return Err(PreprocessError::InvalidArgument("window must be at least 1".into()));
    }
    let v = &series.values;
    let values = (0..v.len())
        .map(|t| {
            let lo = (t + 1).saturating_sub(window);
            let (sum, n) = v[lo..=t]
                .iter()
                .filter(|x| !x.is_nan())
                .fold((0.0, 0usize), |(s, n), &x| (s + x, n + 1));
            if n == 0 {
                f64::NAN
            } else {
                sum / n as f64
            }
        })
        .collect();
    Ok(LevelSeries {
        sensor_id: series.sensor_id.clone(),
        start: series.start,
        step_s: series.step_s,
        values,
    })
}

/// `out[t] = x[t] − x[t−lag]`; the first `lag` entries are NaN.
pub fn residual_series(values: &[f64], lag: usize) -> Vec<f64> {
    (0..values.len())
        .map(|t| if t < lag { f64::NAN } else { values[t] - values[t - lag] })
        .collect()
}

/// Inverts [`residual_series`] given the first `lag` original values.
pub fn reconstruct_from_residuals(anchors: &[f64], residuals: &[f64]) -> Vec<f64> {
    let lag = anchors.len();
    let mut out = Vec::with_capacity(residuals.len());
    for t in 0..residuals.len() {
        let v = if t < lag { anchors[t] } else { out[t - lag] + residuals[t] };
        out.push(v);
    }
    out
}

/// Product-moment correlation over the pairs where both values are present.
pub fn pearson_corr(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(PreprocessError::DegenerateInput(format!("lengths {} and {}", x.len(), y.len())));
    }
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| !a.is_nan() && !b.is_nan())
        .map(|(&a, &b)| (a, b))
        .collect();
    if pairs.len() < 2 {
        return Err(PreprocessError::DegenerateInput(format!("{} complete pairs", pairs.len())));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(PreprocessError::DegenerateInput("constant input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation of the trailing `window`-step rain sum with the level and
/// with the level change over the same window, as `(corr_level, corr_change)`.
///
/// `rain[t]` and `levels[t]` must describe the same step.
pub fn rain_level_correlation(rain: &[f64], levels: &[f64], window: usize) -> Result<(f64, f64)> {
    if window == 0 {
        return Err(PreprocessError::InvalidArgument("window must be at least 1".into()));
    }
    if rain.len() != levels.len() {
        return Err(PreprocessError::ShapeMismatch(format!("{} rain vs {} level steps", rain.len(), levels.len())));
    }
    let n = rain.len();
    if n <= window {
        return Err(PreprocessError::TooFewSamples(n));
    }
    let mut sums = Vec::with_capacity(n - window);
    let mut level = Vec::with_capacity(n - window);
    let mut change = Vec::with_capacity(n - window);
    for t in window..n {
        sums.push(rain[t + 1 - window..=t].iter().map(|v| if v.is_nan() { 0.0 } else { *v }).sum::<f64>());
        level.push(levels[t]);
        change.push(levels[t] - levels[t - window]);
    }
    Ok((pearson_corr(&sums, &level)?, pearson_corr(&sums, &change)?))
}

/// Windowed samples sharing one copy of the rain frames.
///
/// Sample `i` has issue time `issue_times[i]`; its input is the `lookback`
/// frames ending at frame `frame_end[i]`, stored contiguously in `frames`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    frames: Arc<Vec<f64>>,
    pub frame_h: usize,
    pub frame_w: usize,
    frame_end: Vec<usize>,
    pub issue_times: Vec<i64>,
    pub targets: Vec<f64>,
    pub anchor_levels: Vec<f64>,
    pub horizon_steps: usize,
    pub lookback_steps: usize,
    pub step_s: i64,
    pub mode: Mode,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn frame_len(&self) -> usize {
        self.frame_h * self.frame_w
    }

    /// Row-major `[lookback, frame_h, frame_w]` input of sample `i`.
    pub fn input(&self, i: usize) -> &[f64] {
        let fl = self.frame_len();
        let end = self.frame_end[i] + 1;
        &self.frames[(end - self.lookback_steps) * fl..end * fl]
    }

    /// Observed level at `issue + horizon`, reconstructed from the target.
    pub fn future_level(&self, i: usize) -> f64 {
        match self.mode {
            Mode::Absolute => self.targets[i],
            Mode::Residual => self.anchor_levels[i] + self.targets[i],
        }
    }

    /// The raw frames every window of this set reads from.
    pub fn covered_frames(&self) -> &[f64] {
        match (self.frame_end.first(), self.frame_end.last()) {
            (Some(&a), Some(&b)) => {
                let fl = self.frame_len();
                &self.frames[(a + 1 - self.lookback_steps) * fl..(b + 1) * fl]
            }
            _ => &[],
        }
    }

    /// Samples at `indices`, in that order, sharing the frame buffer.
    pub fn select(&self, indices: &[usize]) -> SampleSet {
        SampleSet {
            frames: Arc::clone(&self.frames),
            frame_h: self.frame_h,
            frame_w: self.frame_w,
            frame_end: indices.iter().map(|&i| self.frame_end[i]).collect(),
            issue_times: indices.iter().map(|&i| self.issue_times[i]).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            anchor_levels: indices.iter().map(|&i| self.anchor_levels[i]).collect(),
            horizon_steps: self.horizon_steps,
            lookback_steps: self.lookback_steps,
            step_s: self.step_s,
            mode: self.mode,
        }
    }

    pub fn range(&self, r: std::ops::Range<usize>) -> SampleSet {
        self.select(&r.collect::<Vec<_>>())
    }

    /// Keeps every `stride`-th sample, starting with the first.
    pub fn strided(&self, stride: usize) -> SampleSet {
        self.select(&(0..self.len()).step_by(stride.max(1)).collect::<Vec<_>>())
    }

    /// Same samples, with targets re-expressed for `mode`.
    pub fn with_mode(&self, mode: Mode) -> SampleSet {
        let mut out = self.clone();
        if mode != self.mode {
            out.targets = (0..self.len())
                .map(|i| match mode {
                    Mode::Absolute => self.future_level(i),
                    Mode::Residual => self.future_level(i) - self.anchor_levels[i],
                })
                .collect();
            out.mode = mode;
        }
        out
    }
}

/// Builds one sample per issue time `t` with `lookback` frames of history and
/// finite levels at `t` and `t + horizon`.
///
/// `rain` must be consecutive frames on the level series' time grid.
pub fn make_windows(rain: &[PrecipFrame], levels: &LevelSeries, lookback: usize, horizon: usize, mode: Mode) -> Result<SampleSet> {
    if lookback == 0 || horizon == 0 {
        return Err(PreprocessError::InvalidArgument("lookback and horizon must be at least 1".into()));
    }
    let (frame_h, frame_w) = rain.first().map_or((0, 0), |f| (f.height, f.width));
    let offset = match rain.first() {
        None => 0,
        Some(f) => levels.index_of(f.timestamp).ok_or_else(|| {
            PreprocessError::MisalignedSeries(format!("first frame at {} is not on the level grid", f.timestamp))
        })?,
    };
    let mut frames = Vec::with_capacity(rain.len() * frame_h * frame_w);
    for (i, f) in rain.iter().enumerate() {
        if f.timestamp != levels.time_at(offset + i) {
            return Err(PreprocessError::MisalignedSeries(format!(
                "frame {i} at {} expected at {}",
                f.timestamp,
                levels.time_at(offset + i)
            )));
        }
        if (f.height, f.width) != (frame_h, frame_w) {
            return Err(PreprocessError::ShapeMismatch(format!("frame {i} is {}x{}", f.height, f.width)));
        }
        frames.extend(f.values.iter().map(|&v| if v.is_nan() { 0.0 } else { v }));
    }

    let mut set = SampleSet {
        frames: Arc::new(frames),
        frame_h,
        frame_w,
        frame_end: Vec::new(),
        issue_times: Vec::new(),
        targets: Vec::new(),
        anchor_levels: Vec::new(),
        horizon_steps: horizon,
        lookback_steps: lookback,
        step_s: levels.step_s,
        mode,
    };
    for t in lookback.saturating_sub(1)..rain.len() {
        let j = offset + t;
        let Some(&future) = levels.values.get(j + horizon) else { break };
        let anchor = levels.values[j];
        if anchor.is_nan() || future.is_nan() {
            continue;
        }
        set.frame_end.push(t);
        set.issue_times.push(levels.time_at(j));
        set.anchor_levels.push(anchor);
        set.targets.push(match mode {
            Mode::Absolute => future,
            Mode::Residual => future - anchor,
        });
    }
    Ok(set)
}

/// Chronological train/validation/test partition.
pub fn split_dataset(samples: &SampleSet, spec: &SplitSpec) -> Result<(SampleSet, SampleSet, SampleSet)> {
    spec.validate()?;
    let n = samples.len();
    if n < 10 {
        return Err(PreprocessError::TooFewSamples(n));
    }
    let (a, b, _) = spec.sizes(n);
    Ok((samples.range(0..a), samples.range(a..a + b), samples.range(a + b..n)))
}

/// Drops windows whose span `[t − L + 1, t + H]` straddles the start of the
/// next (or current) part, so no level or frame is shared across parts.
pub fn purge_boundaries(parts: &[SampleSet]) -> Vec<SampleSet> {
    let starts: Vec<Option<i64>> = parts.iter().map(|p| p.issue_times.first().copied()).collect();
    parts
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let back = (p.lookback_steps as i64 - 1) * p.step_s;
            let ahead = p.horizon_steps as i64 * p.step_s;
            let keep: Vec<usize> = (0..p.len())
                .filter(|&i| {
                    let t = p.issue_times[i];
                    let straddles = |b: i64| t - back < b && b <= t + ahead;
                    let own = k > 0 && starts[k].is_some_and(straddles);
                    let next = starts.get(k + 1).copied().flatten().is_some_and(straddles);
                    !(own || next)
                })
                .collect();
            p.select(&keep)
        })
        .collect()
}

/// Divisor for rain inputs: 99th-percentile cell value, at least 1 mm.
pub fn input_scale(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return 1.0;
    }
    v.sort_by(f64::total_cmp);
    let rank = ((0.99 * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1].max(1.0)
}
