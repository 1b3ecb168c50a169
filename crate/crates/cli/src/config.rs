//! Flat `key = value` run configuration.
//!
//! Every key has a default. A config file overrides defaults, command-line
//! flags override the file. Blank lines and lines starting with `#` are
//! ignored. [`RunConfig::hash`] fingerprints everything except paths, so
//! the same settings give the same hash wherever they run.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use raincast_core::grid_io::GridMeta;
use raincast_core::metrics::EventConfig;
use raincast_core::model::{ForecastModelSpec, TrainConfig};
use raincast_core::preprocess::{ClipSpec, Mode, SplitSpec};
use raincast_core::synth::{ReservoirSpec, StormSpec};
use raincast_tensor::{AdamConfig, Padding};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Keys that name locations rather than settings; excluded from the hash.
const PATH_KEYS: &[&str] = &["data_dir", "out_dir"];

pub const DEFAULTS: &[(&str, &str)] = &[
    ("data_dir", "data"),
    ("out_dir", "runs"),
    ("seed", "42"),
    ("horizons", "8,12,16,32,48"),
    ("mode", "residual"),
    ("eval_models", ""),
    ("lookback", "32"),
    ("agg_k", "3"),
    ("sma_window", "8"),
    ("diag_lag", "8"),
    ("grid_origin_lat", "51.9"),
    ("grid_origin_lon", "10.4"),
    ("grid_lat_step", "-0.01"),
    ("grid_lon_step", "0.015"),
    ("clip_lat", "51.82"),
    ("clip_lon", "10.52"),
    ("clip_h", "16"),
    ("clip_w", "16"),
    ("train_frac", "0.6"),
    ("inner_train_frac", "0.8"),
    ("kernel", "3x3x3"),
    ("conv_channels", "8,16"),
    ("spatial_padding", "same"),
    ("temporal_padding", "valid"),
    ("pool", "2"),
    ("lstm_hidden", "128,64,32,8"),
    ("epochs", "50"),
    ("batch_size", "256"),
    ("lr", "0.001"),
    ("beta1", "0.9"),
    ("beta2", "0.999"),
    ("adam_eps", "1e-8"),
    ("sample_stride", "1"),
    ("eval_batch", "256"),
    ("min_level_cm", "40"),
    ("tolerance_cm", "10"),
    ("synth_steps", "20000"),
    ("synth_height", "16"),
    ("synth_width", "16"),
    ("synth_substeps", "3"),
    ("storm_rate", "0.015"),
    ("storm_amplitude_mm", "3"),
    ("storm_sigma", "3"),
    ("storm_drift_rows", "0.05"),
    ("storm_drift_cols", "0.1"),
    ("storm_duration", "36"),
    ("k_decay", "0.92"),
    ("gain_cm_per_mm", "1.5"),
    ("base_level_cm", "40"),
    ("noise_sd_cm", "0.5"),
    ("seasonal_amp_cm", "25"),
    ("seasonal_period_steps", "8760"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(CliError::Config(format!("unknown key '{key}'"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_default()
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| CliError::Config(format!("{key} = '{v}' is not valid")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        let v = self.get(key);
        if v.trim().is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|x| x.trim().parse().map_err(|_| CliError::Config(format!("{key} = '{v}' is not valid"))))
            .collect()
    }

    /// Canonical text: sorted `key=value` lines, paths omitted.
    pub fn canonical(&self) -> String {
        self.values
            .iter()
            .filter(|(k, _)| !PATH_KEYS.contains(&k.as_str()))
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    /// `config_hash=… seed=…` provenance tag carried by every artifact.
    pub fn provenance(&self) -> String {
        format!("config_hash={} seed={}", self.hash(), self.get("seed"))
    }

    pub fn data_dir(&self) -> PathBuf {
        PathBuf::from(self.get("data_dir"))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out_dir"))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.parse("seed")
    }

    pub fn mode(&self) -> Result<Mode, CliError> {
        self.parse("mode")
    }

    pub fn horizons(&self) -> Result<Vec<usize>, CliError> {
        let h: Vec<usize> = self.list("horizons")?;
        if h.is_empty() || h.contains(&0) {
            return Err(CliError::Config("horizons must be positive step counts".into()));
        }
        Ok(h)
    }

    pub fn set_horizons(&mut self, h: &[usize]) {
        let v = h.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        self.values.insert("horizons".into(), v);
    }

    /// Model names to evaluate: `baseline` plus the configured mode's model
    /// unless `eval_models` lists them explicitly.
    pub fn eval_models(&self) -> Result<Vec<String>, CliError> {
        let explicit: Vec<String> = self.list("eval_models")?;
        if !explicit.is_empty() {
            for m in &explicit {
                if !["baseline", "strpm", "strpmr"].contains(&m.as_str()) {
                    return Err(CliError::Config(format!("unknown model '{m}'")));
                }
            }
            return Ok(explicit);
        }
        Ok(vec!["baseline".into(), self.mode()?.model_name().into()])
    }

    pub fn grid_meta(&self) -> Result<GridMeta, CliError> {
        Ok(GridMeta {
            origin_lat: self.parse("grid_origin_lat")?,
            origin_lon: self.parse("grid_origin_lon")?,
            lat_step: self.parse("grid_lat_step")?,
            lon_step: self.parse("grid_lon_step")?,
        })
    }

    pub fn clip(&self) -> Result<ClipSpec, CliError> {
        Ok(ClipSpec {
            center_lat: self.parse("clip_lat")?,
            center_lon: self.parse("clip_lon")?,
            win_h: self.parse("clip_h")?,
            win_w: self.parse("clip_w")?,
        })
    }

    pub fn split(&self) -> Result<SplitSpec, CliError> {
        Ok(SplitSpec {
            train_frac: self.parse("train_frac")?,
            inner_train_frac: self.parse("inner_train_frac")?,
        })
    }

    pub fn event_config(&self, period_years: f64) -> Result<EventConfig, CliError> {
        Ok(EventConfig {
            min_level_cm: self.parse("min_level_cm")?,
            tolerance_b_cm: self.parse("tolerance_cm")?,
            period_years,
        })
    }

    pub fn model_spec(&self, horizon: usize, mode: Mode) -> Result<ForecastModelSpec, CliError> {
        let kernel: Vec<usize> = self
            .get("kernel")
            .split('x')
            .map(|x| x.trim().parse().map_err(|_| CliError::Config(format!("kernel = '{}'", self.get("kernel")))))
            .collect::<Result<_, _>>()?;
        let [t_k, h_k, w_k] = kernel[..] else {
            return Err(CliError::Config("kernel must be TxHxW".into()));
        };
        let padding = |k: &str| -> Result<Padding, CliError> {
            self.get(k).parse().map_err(|_| CliError::Config(format!("{k} = '{}'", self.get(k))))
        };
        Ok(ForecastModelSpec {
            lookback: self.parse("lookback")?,
            horizon,
            frame_h: self.parse("clip_h")?,
            frame_w: self.parse("clip_w")?,
            kernel: (t_k, h_k, w_k),
            conv_channels: self.list("conv_channels")?,
            spatial_padding: padding("spatial_padding")?,
            temporal_padding: padding("temporal_padding")?,
            pool: self.parse("pool")?,
            lstm_hidden: self.list("lstm_hidden")?,
            mode,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        Ok(TrainConfig {
            epochs: self.parse("epochs")?,
            batch_size: self.parse("batch_size")?,
            adam: AdamConfig {
                lr: self.parse("lr")?,
                beta1: self.parse("beta1")?,
                beta2: self.parse("beta2")?,
                eps: self.parse("adam_eps")?,
            },
            seed: self.seed()?,
            sample_stride: self.parse("sample_stride")?,
        })
    }

    pub fn storm_spec(&self) -> Result<StormSpec, CliError> {
        Ok(StormSpec {
            height: self.parse("synth_height")?,
            width: self.parse("synth_width")?,
            substeps: self.parse("synth_substeps")?,
            rate: self.parse("storm_rate")?,
            amplitude_mm: self.parse("storm_amplitude_mm")?,
            sigma_cells: self.parse("storm_sigma")?,
            drift: (self.parse("storm_drift_rows")?, self.parse("storm_drift_cols")?),
            mean_duration: self.parse("storm_duration")?,
            cell_km: 1.0,
            seed: self.seed()?,
        })
    }

    pub fn reservoir_spec(&self) -> Result<ReservoirSpec, CliError> {
        Ok(ReservoirSpec {
            k_decay: self.parse("k_decay")?,
            gain_cm_per_mm: self.parse("gain_cm_per_mm")?,
            base_level_cm: self.parse("base_level_cm")?,
            noise_sd_cm: self.parse("noise_sd_cm")?,
            seasonal_amp_cm: self.parse("seasonal_amp_cm")?,
            seasonal_period_steps: self.parse("seasonal_period_steps")?,
        })
    }
}
