//! One-step-ahead-at-horizon forecasters for the aggregate CPU series.
//!
//! Three interchangeable predictors: an ordinary least-squares linear
//! regressor fit on the input window at every activation, a multi-layer
//! perceptron and a recurrent network, both trained offline with momentum
//! gradient descent and validation-based early stopping. The forecast of the
//! summed cluster CPU is divided by the number of currently active instances
//! to produce the predicted average CPU metric consumed by the alarms.

mod io;
mod linear;
mod net;
mod train;

pub use io::{load_model, load_model_from_str, save_model, save_model_to_string};
pub use linear::{fit_linear, predict_linear, LinearModel};
pub use net::{Activation, Example, GradientModel, Matrix, MlpParams, RnnParams};
pub use train::{
    split_dataset, train, windows_from_series, Dataset, MomentumOptimizer, Split, TrainConfig,
    TrainReport, ValCheck,
};

use crate::store::{MetricPoint, TimeSeries};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("all timestamps in the regression window are equal")]
    DegenerateWindow,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("need {need} samples in the input window, have {have}")]
    InsufficientWindow { have: usize, need: usize },
    #[error("forecast requires at least one active instance")]
    NoActiveInstances,
    #[error("non-finite loss {loss} at step {step}; lower the learning rate")]
    NonFiniteLoss { step: usize, loss: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Input window length, forecast horizon and sampling period of the
/// prediction pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastConfig {
    /// Number of most recent samples fed to the model.
    pub input_window: usize,
    /// How far ahead the forecast looks, in minutes.
    pub horizon_min: i64,
    /// Sampling period of the input series, seconds.
    pub sample_period_s: i64,
    /// Values are multiplied by this before entering a neural model and the
    /// output is divided by it again; 1/(100 * max cluster size) keeps the
    /// units in a range the ReLU stacks train well on.
    pub value_scale: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self { input_window: 20, horizon_min: 15, sample_period_s: 60, value_scale: 1.0 / 500.0 }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.input_window < 2 {
            return Err(ForecastError::InvalidConfig("input window must be >= 2".into()));
        }
        if self.horizon_min < 1 {
            return Err(ForecastError::InvalidConfig("horizon must be >= 1 minute".into()));
        }
        if self.sample_period_s <= 0 {
            return Err(ForecastError::InvalidConfig("sample period must be positive".into()));
        }
        if !(self.value_scale.is_finite() && self.value_scale > 0.0) {
            return Err(ForecastError::InvalidConfig("value scale must be positive".into()));
        }
        Ok(())
    }

    pub fn horizon_seconds(&self) -> i64 {
        self.horizon_min * 60
    }
}

/// The predictor behind a scaling policy. Linear regression has no trained
/// state: it is refit on the input window at every activation.
#[derive(Debug, Clone)]
pub enum PolicyModel {
    Linear,
    Mlp(MlpParams),
    Rnn(RnnParams),
}

impl PolicyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            PolicyModel::Linear => "lr",
            PolicyModel::Mlp(_) => "mlp",
            PolicyModel::Rnn(_) => "rnn",
        }
    }
}

/// Forecasts the average CPU of the cluster at `now + horizon`.
///
/// `agg` is the summed-CPU series of the currently active instances; the
/// model runs on its trailing `input_window` samples and the output is
/// divided by `n_active`, assuming the cluster size stays constant over the
/// horizon. The returned point is stamped at `now + horizon` so it can be
/// ingested directly under the predicted-metric name.
pub fn forecast_cluster_average(
    agg: &TimeSeries,
    n_active: usize,
    model: &PolicyModel,
    cfg: &ForecastConfig,
) -> Result<MetricPoint, ForecastError> {
    cfg.validate()?;
    if n_active == 0 {
        return Err(ForecastError::NoActiveInstances);
    }
    if agg.len() < cfg.input_window {
        return Err(ForecastError::InsufficientWindow { have: agg.len(), need: cfg.input_window });
    }
    let window = &agg.points[agg.len() - cfg.input_window..];
    let now = window.last().expect("window is non-empty").timestamp;
    let at = now + cfg.horizon_seconds();

    let summed = match model {
        PolicyModel::Linear => {
            let pairs: Vec<(i64, f64)> = window.iter().map(|p| (p.timestamp, p.value)).collect();
            let fit = fit_linear(&pairs)?;
            predict_linear(&fit, at)
        }
        PolicyModel::Mlp(mlp) => {
            let scaled: Vec<f64> = window.iter().map(|p| p.value * cfg.value_scale).collect();
            mlp.forward_window(&scaled)? / cfg.value_scale
        }
        PolicyModel::Rnn(rnn) => {
            let scaled: Vec<f64> = window.iter().map(|p| p.value * cfg.value_scale).collect();
            rnn.forward_window(&scaled)? / cfg.value_scale
        }
    };

    Ok(MetricPoint::new(at, summed / n_active as f64))
}
