//! Precipitation grid files (RPG1) and water-level CSV series.
//!
//! RPG1 layout, little-endian:
//!
//! | bytes  | field                                   |
//! |--------|-----------------------------------------|
//! | 0–3    | magic `RPG1`                            |
//! | 4–5    | width, u16                              |
//! | 6–7    | height, u16                             |
//! | 8–15   | timestamp, i64 epoch seconds            |
//! | 16–19  | cell size in km, f32                    |
//! | 20–23  | reserved, must be 0                     |
//! | 24–    | width·height f32 values, row-major, north row first |
//!
//! Missing cells are the quiet NaN `0x7FC0_0000`. A file may hold several
//! frames back to back ([`parse_rpg_stack`]).

use std::fmt::Write as _;

use thiserror::Error;

pub const RPG_MAGIC: &[u8; 4] = b"RPG1";
pub const RPG_HEADER_LEN: usize = 24;
pub const LEVEL_CSV_HEADER: &str = "timestamp,level_cm";
/// Bit pattern written for a missing cell.
pub const MISSING_F32_BITS: u32 = 0x7FC0_0000;
/// Upper bound on the number of samples a CSV may expand to after gap filling.
pub const MAX_SERIES_LEN: usize = 50_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridIoError {
    #[error("bad magic, expected RPG1")]
    BadMagic,
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("cell {index} holds invalid value {value}")]
    NonFiniteNegative { index: usize, value: f64 },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("frame invariant violated: {0}")]
    InvariantViolation(String),
    #[error("line {line}: missing header '{LEVEL_CSV_HEADER}'")]
    BadCsvHeader { line: usize },
    #[error("line {line}: timestamps not strictly ascending")]
    UnsortedRows { line: usize },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: delta {delta}s is not a multiple of step {step}s")]
    InconsistentStep { line: usize, delta: i64, step: i64 },
    #[error("series would expand to {0} samples")]
    SeriesTooLong(u128),
}

impl GridIoError {
    /// Stable machine-readable name of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Self::BadMagic => "BadMagic",
            Self::TruncatedPayload { .. } => "TruncatedPayload",
            Self::NonFiniteNegative { .. } => "NonFiniteNegative",
            Self::InvalidHeader(_) => "InvalidHeader",
            Self::InvariantViolation(_) => "InvariantViolation",
            Self::BadCsvHeader { .. } => "BadCsvHeader",
            Self::UnsortedRows { .. } => "UnsortedRows",
            Self::MalformedRow { .. } => "MalformedRow",
            Self::InconsistentStep { .. } => "InconsistentStep",
            Self::SeriesTooLong(_) => "SeriesTooLong",
        }
    }
}

/// One timestamped precipitation grid in mm per interval.
#[derive(Clone, Debug)]
pub struct PrecipFrame {
    pub timestamp: i64,
    pub width: usize,
    pub height: usize,
    pub cell_km: f32,
    /// Row-major, north row first. Missing cells are NaN.
    pub values: Vec<f64>,
}

impl PartialEq for PrecipFrame {
    /// Bitwise on values, with every NaN considered equal to every NaN.
    fn eq(&self, other: &Self) -> bool {
        self.timestamp == other.timestamp
            && self.width == other.width
            && self.height == other.height
            && self.cell_km.to_bits() == other.cell_km.to_bits()
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| (a.is_nan() && b.is_nan()) || a.to_bits() == b.to_bits())
    }
}

impl PrecipFrame {
    pub fn new(timestamp: i64, width: usize, height: usize, cell_km: f32, values: Vec<f64>) -> Result<Self, GridIoError> {
        let frame = Self {
            timestamp,
            width,
            height,
            cell_km,
            values,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<(), GridIoError> {
        if self.values.len() != self.width * self.height {
            return Err(GridIoError::InvariantViolation(format!(
                "{} values for a {}x{} grid",
                self.values.len(),
                self.width,
                self.height
            )));
        }
        if !(self.cell_km.is_finite() && self.cell_km > 0.0) {
            return Err(GridIoError::InvariantViolation(format!("cell_km {}", self.cell_km)));
        }
        if let Some((index, &value)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_nan() && (*v < &0.0 || v.is_infinite()))
        {
            return Err(GridIoError::NonFiniteNegative { index, value });
        }
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Sum of all cells, missing cells counted as zero.
    pub fn total_mm(&self) -> f64 {
        self.values.iter().filter(|v| !v.is_nan()).sum()
    }

    /// Mean over all cells, missing cells counted as zero.
    pub fn mean_mm(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.total_mm() / self.values.len() as f64
        }
    }
}

/// Decodes exactly one RPG1 frame; `bytes` must have the exact encoded size.
pub fn parse_rpg(bytes: &[u8]) -> Result<PrecipFrame, GridIoError> {
    let (frame, used) = parse_rpg_prefix(bytes)?;
    if used != bytes.len() {
        return Err(GridIoError::TruncatedPayload {
            expected: used,
            actual: bytes.len(),
        });
    }
    Ok(frame)
}

/// Decodes a concatenation of RPG1 frames.
pub fn parse_rpg_stack(mut bytes: &[u8]) -> Result<Vec<PrecipFrame>, GridIoError> {
    let mut frames = Vec::new();
    while !bytes.is_empty() {
        let (frame, used) = parse_rpg_prefix(bytes)?;
        frames.push(frame);
        bytes = &bytes[used..];
    }
    Ok(frames)
}

fn parse_rpg_prefix(bytes: &[u8]) -> Result<(PrecipFrame, usize), GridIoError> {
    if bytes.len() < RPG_HEADER_LEN {
        return Err(GridIoError::TruncatedPayload {
            expected: RPG_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[0..4] != RPG_MAGIC {
        return Err(GridIoError::BadMagic);
    }
    let width = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    let height = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let timestamp = i64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cell_km = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let reserved = u32::from_le_bytes(bytes[20..24].try_into().unwrap());

    let expected = RPG_HEADER_LEN + 4 * width * height;
    if bytes.len() < expected {
        return Err(GridIoError::TruncatedPayload {
            expected,
            actual: bytes.len(),
        });
    }
    if reserved != 0 {
        return Err(GridIoError::InvalidHeader(format!("reserved word {reserved:#x}")));
    }
    if !(cell_km.is_finite() && cell_km > 0.0) {
        return Err(GridIoError::InvalidHeader(format!("cell_km {cell_km}")));
    }

    let mut values = Vec::with_capacity(width * height);
    for (index, chunk) in bytes[RPG_HEADER_LEN..expected].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if v.is_nan() {
            values.push(f64::NAN);
        } else if v < 0.0 || v.is_infinite() {
            return Err(GridIoError::NonFiniteNegative {
                index,
                value: f64::from(v),
            });
        } else {
            values.push(f64::from(v));
        }
    }
    Ok((
        PrecipFrame {
            timestamp,
            width,
            height,
            cell_km,
            values,
        },
        expected,
    ))
}

/// Encodes one frame. Every present value must be exactly representable as f32.
pub fn write_rpg(frame: &PrecipFrame) -> Result<Vec<u8>, GridIoError> {
    let mut out = Vec::with_capacity(RPG_HEADER_LEN + 4 * frame.values.len());
    append_rpg(frame, &mut out)?;
    Ok(out)
}

pub fn write_rpg_stack(frames: &[PrecipFrame]) -> Result<Vec<u8>, GridIoError> {
    let mut out = Vec::new();
    for f in frames {
        append_rpg(f, &mut out)?;
    }
    Ok(out)
}

fn append_rpg(frame: &PrecipFrame, out: &mut Vec<u8>) -> Result<(), GridIoError> {
    frame.validate()?;
    let (Ok(w), Ok(h)) = (u16::try_from(frame.width), u16::try_from(frame.height)) else {
        return Err(GridIoError::InvariantViolation(format!(
            "{}x{} grid exceeds u16 extents",
            frame.width, frame.height
        )));
    };
    out.extend_from_slice(RPG_MAGIC);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&frame.timestamp.to_le_bytes());
    out.extend_from_slice(&frame.cell_km.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for (i, &v) in frame.values.iter().enumerate() {
        let bits = if v.is_nan() {
            MISSING_F32_BITS
        } else {
            let f = v as f32;
            if f64::from(f) != v {
                return Err(GridIoError::InvariantViolation(format!(
                    "cell {i} value {v} is not representable as f32"
                )));
            }
            f.to_bits()
        };
        out.extend_from_slice(&bits.to_le_bytes());
    }
    Ok(())
}

/// Rounds every value to the nearest f32 so the frame can be written.
pub fn round_to_f32(mut frame: PrecipFrame) -> PrecipFrame {
    for v in &mut frame.values {
        if !v.is_nan() {
            *v = f64::from(*v as f32);
        }
    }
    frame
}

/// Affine north-up mapping from grid indices to geographic coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridMeta {
    /// Latitude of the (0, 0) cell centre, degrees.
    pub origin_lat: f64,
    /// Longitude of the (0, 0) cell centre, degrees.
    pub origin_lon: f64,
    /// Degrees per row (negative for north-up grids).
    pub lat_step: f64,
    /// Degrees per column.
    pub lon_step: f64,
}

impl GridMeta {
    pub fn validate(&self) -> Result<(), GridIoError> {
        if self.lat_step == 0.0 || self.lon_step == 0.0 || !self.lat_step.is_finite() || !self.lon_step.is_finite() {
            return Err(GridIoError::InvariantViolation(format!(
                "grid steps {} / {}",
                self.lat_step, self.lon_step
            )));
        }
        Ok(())
    }
}

/// Regularly sampled water-level series in cm. Gaps are NaN.
#[derive(Clone, Debug)]
pub struct LevelSeries {
    pub sensor_id: String,
    pub start: i64,
    pub step_s: i64,
    pub values: Vec<f64>,
}

impl PartialEq for LevelSeries {
    fn eq(&self, other: &Self) -> bool {
        self.sensor_id == other.sensor_id
            && self.start == other.start
            && self.step_s == other.step_s
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| (a.is_nan() && b.is_nan()) || a.to_bits() == b.to_bits())
    }
}

impl LevelSeries {
    pub fn new(sensor_id: impl Into<String>, start: i64, step_s: i64, values: Vec<f64>) -> Result<Self, GridIoError> {
        let s = Self {
            sensor_id: sensor_id.into(),
            start,
            step_s,
            values,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), GridIoError> {
        if self.step_s <= 0 {
            return Err(GridIoError::InvariantViolation(format!("step_s {}", self.step_s)));
        }
        if let Some((index, &value)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_nan() && (*v < &0.0 || v.is_infinite()))
        {
            return Err(GridIoError::NonFiniteNegative { index, value });
        }
        Ok(())
    }

    pub fn with_sensor_id(mut self, id: impl Into<String>) -> Self {
        self.sensor_id = id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, i: usize) -> i64 {
        self.start + i as i64 * self.step_s
    }

    /// Index of timestamp `t`, if it lies on the grid and inside the series.
    pub fn index_of(&self, t: i64) -> Option<usize> {
        let off = t.checked_sub(self.start)?;
        if off < 0 || off % self.step_s != 0 {
            return None;
        }
        let i = usize::try_from(off / self.step_s).ok()?;
        (i < self.values.len()).then_some(i)
    }
}

/// Parses a `timestamp,level_cm` CSV into a regular series, NaN-filling gaps.
pub fn read_level_csv(text: &str) -> Result<LevelSeries, GridIoError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, h)) if h.trim() == LEVEL_CSV_HEADER => {}
        _ => return Err(GridIoError::BadCsvHeader { line: 1 }),
    }

    let mut rows: Vec<(usize, i64, f64)> = Vec::new();
    for (line, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let mut fields = raw.split(',');
        let (Some(ts), Some(lv), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(GridIoError::MalformedRow {
                line,
                reason: "expected two fields".into(),
            });
        };
        let t: i64 = ts.trim().parse().map_err(|_| GridIoError::MalformedRow {
            line,
            reason: format!("timestamp '{ts}'"),
        })?;
        let lv = lv.trim();
        let level = if lv.is_empty() || lv.eq_ignore_ascii_case("nan") {
            f64::NAN
        } else {
            let v: f64 = lv.parse().map_err(|_| GridIoError::MalformedRow {
                line,
                reason: format!("level '{lv}'"),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(GridIoError::MalformedRow {
                    line,
                    reason: format!("level {v} must be finite and non-negative"),
                });
            }
            v
        };
        if let Some(&(_, prev, _)) = rows.last() {
            if t <= prev {
                return Err(GridIoError::UnsortedRows { line });
            }
        }
        rows.push((line, t, level));
    }

    let Some(&(_, start, _)) = rows.first() else {
        return Ok(LevelSeries {
            sensor_id: String::new(),
            start: 0,
            step_s: 900,
            values: Vec::new(),
        });
    };

    let step = rows
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .min()
        .unwrap_or(900);
    for w in rows.windows(2) {
        let delta = w[1].1 - w[0].1;
        if delta % step != 0 {
            return Err(GridIoError::InconsistentStep {
                line: w[1].0,
                delta,
                step,
            });
        }
    }

    let last = rows.last().unwrap().1;
    let n = (last as i128 - start as i128) / step as i128 + 1;
    if n > MAX_SERIES_LEN as i128 {
        return Err(GridIoError::SeriesTooLong(n as u128));
    }
    let mut values = vec![f64::NAN; n as usize];
    for &(_, t, v) in &rows {
        values[((t as i128 - start as i128) / step as i128) as usize] = v;
    }
    Ok(LevelSeries {
        sensor_id: String::new(),
        start,
        step_s: step,
        values,
    })
}

/// Writes the series as CSV, omitting NaN samples.
pub fn write_level_csv(series: &LevelSeries) -> String {
    let mut out = String::with_capacity(16 * series.len() + 32);
    out.push_str(LEVEL_CSV_HEADER);
    out.push('\n');
    for (i, v) in series.values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        let _ = writeln!(out, "{},{}", series.time_at(i), v);
    }
    out
}
