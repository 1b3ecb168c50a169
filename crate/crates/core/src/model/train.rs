use raincast_tensor::{AdamConfig, AdamState, Tape};

use super::net::{network_forward, ForecastModelSpec, ModelParams};
use super::ModelError;
use crate::preprocess::{input_scale, Mode, SampleSet};
use crate::rng::{derive_seed, Rng};

const SHUFFLE_TAG: u64 = 0x5AFF;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Use every n-th training and validation window (1 = all).
    pub sample_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 256,
            adam: AdamConfig::default(),
            seed: 0,
            sample_stride: 1,
        }
    }
}

/// Per-epoch losses in the target's own units (cm², cm).
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub train_mae: f64,
    pub val_mse: Option<f64>,
    pub val_mae: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation MSE (training MSE
    /// when there is no validation set).
    pub params: ModelParams,
    pub curve: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Fits `spec` with Adam on MSE. Samples are converted to the spec's mode.
pub fn train(spec: &ForecastModelSpec, train: &SampleSet, val: &SampleSet, cfg: &TrainConfig) -> Result<TrainOutcome, ModelError> {
    cfg.adam.validate()?;
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(ModelError::InvalidSpec("epochs and batch size must be at least 1".into()));
    }
    let stride = cfg.sample_stride.max(1);
    let train = train.with_mode(spec.mode).strided(stride);
    let val = val.with_mode(spec.mode).strided(stride);
    if train.is_empty() {
        return Err(ModelError::EmptyDataset);
    }

    let mut params = ModelParams::init(spec, cfg.seed)?;
    params.check_samples(&train)?;
    if !val.is_empty() {
        params.check_samples(&val)?;
    }
    params.input_scale = input_scale(train.covered_frames());
    params.target_offset = match spec.mode {
        Mode::Absolute => train.targets.iter().sum::<f64>() / train.len() as f64,
        Mode::Residual => 0.0,
    };
    let ms = train
        .targets
        .iter()
        .map(|t| (t - params.target_offset).powi(2))
        .sum::<f64>()
        / train.len() as f64;
    params.target_scale = ms.sqrt().max(1.0);

    let mut adam = AdamState::for_params(cfg.adam, &params.tensors)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let scale = params.target_scale;

    for epoch in 1..=cfg.epochs {
        Rng::new(derive_seed(&[cfg.seed, SHUFFLE_TAG, epoch as u64])).shuffle(&mut order);
        let (mut se, mut ae) = (0.0, 0.0);
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut tape = Tape::new();
            let vars = params.leaves(&mut tape);
            let x = tape.constant(params.input_shape(chunk.len()), params.input_batch(&train, chunk))?;
            let y = network_forward(&mut tape, spec, &vars, x)?;
            let target: Vec<f64> = chunk
                .iter()
                .map(|&i| (train.targets[i] - params.target_offset) / scale)
                .collect();
            let t = tape.constant(vec![chunk.len(), 1], target.clone())?;
            let loss = tape.mse_loss(y, t)?;
            let lv = tape.scalar(loss);
            if !lv.is_finite() {
                return Err(ModelError::DivergedLoss {
                    epoch,
                    batch: batch_no,
                    loss: lv,
                });
            }
            for (p, q) in tape.value(y).iter().zip(&target) {
                let d = (p - q) * scale;
                se += d * d;
                ae += d.abs();
            }
            let grads = tape.backward(loss)?;
            let g: Vec<Vec<f64>> = vars
                .iter()
                .zip(&params.tensors)
                .map(|(&v, t)| grads.get_or_zeros(v, t.len()))
                .collect();
            let g_refs: Vec<&[f64]> = g.iter().map(Vec::as_slice).collect();
            adam.step(&mut params.tensors, &g_refs)?;
        }
        let n = train.len() as f64;
        let (val_mse, val_mae) = if val.is_empty() {
            (None, None)
        } else {
            let idx: Vec<usize> = (0..val.len()).collect();
            let ys = params.outputs(&val, &idx, cfg.batch_size)?;
            let (mut vse, mut vae) = (0.0, 0.0);
            for (y, t) in ys.iter().zip(&val.targets) {
                let d = params.to_cm(*y) - t;
                vse += d * d;
                vae += d.abs();
            }
            let m = val.len() as f64;
            (Some(vse / m), Some(vae / m))
        };
        let stats = EpochStats {
            epoch,
            train_mse: se / n,
            train_mae: ae / n,
            val_mse,
            val_mae,
        };
        let score = stats.val_mse.unwrap_or(stats.train_mse);
        if !score.is_finite() {
            return Err(ModelError::DivergedLoss {
                epoch,
                batch: 0,
                loss: score,
            });
        }
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, epoch, params.clone()));
        }
        curve.push(stats);
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params,
        curve,
        best_epoch,
    })
}
