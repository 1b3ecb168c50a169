//! Forecasting models: the (2+1)D convolution + LSTM network in its absolute
//! (STRPM) and residual (STRPMr) forms, and the persistence baseline.

mod conv;
mod lstm;
mod net;
mod train;

pub use conv::{conv2plus1d, conv2plus1d_forward, param_count, Conv2Plus1DSpec, Conv2Plus1DWeights, ParamCount};
pub use lstm::{lstm_layer, lstm_layer_projected, lstm_stack_forward, LstmWeights};
pub use net::{
    network_forward, persistence_forecast, predict, strpm_forward, strpmr_forward, Forecast, ForecastModelSpec,
    ModelParams,
};
pub use train::{train, EpochStats, TrainConfig, TrainOutcome};

use raincast_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("loss diverged to {loss} in epoch {epoch}, batch {batch}")]
    DivergedLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("anchor level {0} is not finite")]
    NonFiniteAnchor(f64),
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::ShapeMismatch(_) => "ShapeMismatch",
            Self::InvalidSpec(_) => "InvalidSpec",
            Self::InvalidCheckpoint(_) => "InvalidCheckpoint",
            Self::EmptyDataset => "EmptyDataset",
            Self::DivergedLoss { .. } => "DivergedLoss",
            Self::NonFiniteAnchor(_) => "NonFiniteAnchor",
        }
    }
}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::ShapeMismatch(m) => ModelError::ShapeMismatch(m),
            TensorError::InvalidConfig(m) => ModelError::InvalidSpec(m),
            TensorError::InvalidCheckpoint(m) => ModelError::InvalidCheckpoint(m),
        }
    }
}
