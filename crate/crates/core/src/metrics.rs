//! Overall forecast metrics and the event-focused flood evaluation.

use std::fmt::Write as _;

use thiserror::Error;

use crate::preprocess::pearson_corr;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} observed vs {1} predicted")]
    LengthMismatch(usize, usize),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("observed series is constant")]
    DegenerateObserved,
    #[error("invalid event config: {0}")]
    InvalidConfig(String),
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::LengthMismatch(..) => "LengthMismatch",
            Self::DegenerateInput(_) => "DegenerateInput",
            Self::DegenerateObserved => "DegenerateObserved",
            Self::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

type Result<T> = std::result::Result<T, MetricsError>;

fn check_pair(obs: &[f64], pred: &[f64]) -> Result<()> {
    if obs.len() != pred.len() {
        return Err(MetricsError::LengthMismatch(obs.len(), pred.len()));
    }
    if obs.is_empty() {
        return Err(MetricsError::DegenerateInput("empty series".into()));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn mse(obs: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(obs, pred)?;
    Ok(obs.iter().zip(pred).map(|(o, p)| (o - p) * (o - p)).sum::<f64>() / obs.len() as f64)
}

pub fn mae(obs: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(obs, pred)?;
    Ok(obs.iter().zip(pred).map(|(o, p)| (o - p).abs()).sum::<f64>() / obs.len() as f64)
}

/// Bravais–Pearson correlation of observed and predicted values.
pub fn bp(obs: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(obs, pred)?;
    pearson_corr(obs, pred).map_err(|e| MetricsError::DegenerateInput(e.to_string()))
}

/// Nash–Sutcliffe efficiency.
pub fn nse(obs: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(obs, pred)?;
    let m = mean(obs);
    let den: f64 = obs.iter().map(|o| (o - m) * (o - m)).sum();
    if den == 0.0 {
        return Err(MetricsError::DegenerateObserved);
    }
    let num: f64 = obs.iter().zip(pred).map(|(o, p)| (o - p) * (o - p)).sum();
    Ok(1.0 - num / den)
}

/// Willmott index of agreement.
pub fn ioa(obs: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(obs, pred)?;
    let m = mean(obs);
    let den: f64 = obs
        .iter()
        .zip(pred)
        .map(|(o, p)| {
            let s = (p - m).abs() + (o - m).abs();
            s * s
        })
        .sum();
    if den == 0.0 {
        return Err(MetricsError::DegenerateObserved);
    }
    let num: f64 = obs.iter().zip(pred).map(|(o, p)| (o - p) * (o - p)).sum();
    Ok((1.0 - num / den).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventConfig {
    pub min_level_cm: f64,
    pub tolerance_b_cm: f64,
    /// Length of the evaluated period, used to annualize event counts.
    pub period_years: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            min_level_cm: 40.0,
            tolerance_b_cm: 10.0,
            period_years: 1.0,
        }
    }
}

impl EventConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_level_cm >= 0.0) {
            return Err(MetricsError::InvalidConfig(format!("min_level_cm {}", self.min_level_cm)));
        }
        if !(self.tolerance_b_cm > 0.0) {
            return Err(MetricsError::InvalidConfig(format!("tolerance_b_cm {}", self.tolerance_b_cm)));
        }
        if !(self.period_years > 0.0) {
            return Err(MetricsError::InvalidConfig(format!("period_years {}", self.period_years)));
        }
        Ok(())
    }

    /// Period length for `n` samples spaced `step_s` seconds apart.
    pub fn years_for(n: usize, step_s: i64) -> f64 {
        n as f64 * step_s as f64 / (365.25 * 86_400.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventLabel {
    NotRelevant,
    Ok,
    Over,
    Under,
}

/// Labels each time point. A point is relevant when the observed level is at
/// least `min_level_cm` and not below the previous observation.
pub fn classify_events(obs: &[f64], pred: &[f64], cfg: &EventConfig) -> Result<Vec<EventLabel>> {
    if obs.len() != pred.len() {
        return Err(MetricsError::LengthMismatch(obs.len(), pred.len()));
    }
    let b = cfg.tolerance_b_cm;
    Ok((0..obs.len())
        .map(|t| {
            let relevant = t > 0 && obs[t] >= cfg.min_level_cm && obs[t] >= obs[t - 1];
            if !relevant {
                EventLabel::NotRelevant
            } else if pred[t] > obs[t] + b {
                EventLabel::Over
            } else if pred[t] < obs[t] - b {
                EventLabel::Under
            } else {
                EventLabel::Ok
            }
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventReport {
    pub t_relevant: usize,
    pub t_not_relevant: usize,
    pub t_ok: usize,
    pub t_over: usize,
    pub t_under: usize,
    pub t_ok_avg_pct: f64,
    pub t_under_avg_pct: f64,
    pub t_over_rel_avg_pct: f64,
    pub annual_events_ok: f64,
    pub annual_events_under: f64,
    pub annual_events_over: f64,
    pub annual_events_all: f64,
    pub error_sum: f64,
    pub error_average: f64,
    pub error_max: f64,
    pub error_median: f64,
}

pub fn event_report(obs: &[f64], pred: &[f64], cfg: &EventConfig) -> Result<EventReport> {
    cfg.validate()?;
    let labels = classify_events(obs, pred, cfg)?;
    let count = |l: EventLabel| labels.iter().filter(|&&x| x == l).count();
    let (t_ok, t_over, t_under) = (count(EventLabel::Ok), count(EventLabel::Over), count(EventLabel::Under));
    let total = labels.len();
    let t_relevant = t_ok + t_over + t_under;
    let pct = |c: usize| if total == 0 { 0.0 } else { c as f64 / total as f64 * 100.0 };

    let mut errors: Vec<f64> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| matches!(l, EventLabel::Over | EventLabel::Under))
        .map(|(t, _)| (pred[t] - obs[t]).abs())
        .collect();
    let error_sum: f64 = errors.iter().sum();
    let (error_average, error_max, error_median) = if errors.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        errors.sort_by(f64::total_cmp);
        let n = errors.len();
        let median = if n % 2 == 1 {
            errors[n / 2]
        } else {
            (errors[n / 2 - 1] + errors[n / 2]) / 2.0
        };
        (error_sum / n as f64, errors[n - 1], median)
    };

    let years = cfg.period_years;
    Ok(EventReport {
        t_relevant,
        t_not_relevant: total - t_relevant,
        t_ok,
        t_over,
        t_under,
        t_ok_avg_pct: pct(t_ok),
        t_under_avg_pct: pct(t_under),
        t_over_rel_avg_pct: pct(t_over),
        annual_events_ok: t_ok as f64 / years,
        annual_events_under: t_under as f64 / years,
        annual_events_over: t_over as f64 / years,
        annual_events_all: t_relevant as f64 / years,
        error_sum,
        error_average,
        error_max,
        error_median,
    })
}

/// One (model, horizon) line of the evaluation report. Metrics that are
/// undefined on the given data are `None` and named in `flags`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub horizon_steps: usize,
    pub n: usize,
    pub mse: f64,
    pub mae: f64,
    pub bp: Option<f64>,
    pub nse: Option<f64>,
    pub ioa: Option<f64>,
    pub events: EventReport,
    pub flags: Vec<String>,
}

pub fn evaluate_row(model: &str, horizon_steps: usize, obs: &[f64], pred: &[f64], cfg: &EventConfig) -> Result<ReportRow> {
    let mut flags = Vec::new();
    let mut optional = |name: &str, r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            flags.push(format!("{name}:{}", e.code()));
            None
        }
    };
    let bp_v = optional("bp", bp(obs, pred));
    let nse_v = optional("nse", nse(obs, pred));
    let ioa_v = optional("ioa", ioa(obs, pred));
    Ok(ReportRow {
        model: model.to_string(),
        horizon_steps,
        n: obs.len(),
        mse: mse(obs, pred)?,
        mae: mae(obs, pred)?,
        bp: bp_v,
        nse: nse_v,
        ioa: ioa_v,
        events: event_report(obs, pred, cfg)?,
        flags,
    })
}

pub const REPORT_COLUMNS: &[&str] = &[
    "model",
    "horizon_steps",
    "n",
    "mse",
    "mae",
    "bp",
    "nse",
    "ioa",
    "t_relevant",
    "t_not_relevant",
    "t_ok",
    "t_over",
    "t_under",
    "t_ok_avg_pct",
    "t_under_avg_pct",
    "t_over_rel_avg_pct",
    "annual_events_ok",
    "annual_events_under",
    "annual_events_over",
    "annual_events_all",
    "error_sum",
    "error_average",
    "error_max",
    "error_median",
    "flags",
];

/// CSV with a leading `# key=value ...` provenance comment, then the header
/// [`REPORT_COLUMNS`] and one line per row. Undefined metrics are empty cells;
/// flags are `;`-separated.
pub fn report_csv(rows: &[ReportRow], provenance: &str) -> String {
    let mut out = String::new();
    if !provenance.is_empty() {
        let _ = writeln!(out, "# {provenance}");
    }
    out.push_str(&REPORT_COLUMNS.join(","));
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let e = &r.events;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.model,
            r.horizon_steps,
            r.n,
            r.mse,
            r.mae,
            opt(r.bp),
            opt(r.nse),
            opt(r.ioa),
            e.t_relevant,
            e.t_not_relevant,
            e.t_ok,
            e.t_over,
            e.t_under,
            e.t_ok_avg_pct,
            e.t_under_avg_pct,
            e.t_over_rel_avg_pct,
            e.annual_events_ok,
            e.annual_events_under,
            e.annual_events_over,
            e.annual_events_all,
            e.error_sum,
            e.error_average,
            e.error_max,
            e.error_median,
            r.flags.join(";"),
        );
    }
    out
}
