//! Gradient-descent training with momentum and validation early stopping.
//!
//! The optimizer follows
//!
//! ```text
//!   mu_k      = beta * mu_{k-1} + grad_J(theta_k)
//!   theta_k+1 = theta_k - lambda * mu_k
//! ```
//!
//! Validation loss is checked every `check_every` steps; after `patience`
//! consecutive non-improving checks training stops and the parameters at the
//! minimum recorded validation loss are returned.

use super::net::{Example, GradientModel};
use super::ForecastError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Learning rate lambda.
    pub learning_rate: f64,
    /// Momentum coefficient beta in [0, 1).
    pub momentum: f64,
    /// Validation-loss check interval K, in optimization steps.
    pub check_every: usize,
    /// Consecutive non-improving validation checks before stopping.
    pub patience: usize,
    pub max_steps: usize,
    /// Examples per optimization step; 0 uses the whole training set.
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            check_every: 50,
            patience: 5,
            max_steps: 4000,
            batch_size: 64,
            rng_seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ForecastError::InvalidConfig("learning rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ForecastError::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        if self.check_every == 0 {
            return Err(ForecastError::InvalidConfig("check_every must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(ForecastError::InvalidConfig("patience must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

/// Input/target pairs with uniform window length and finite targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub split: Split,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, split: Split) -> Result<Self, ForecastError> {
        let Some(first) = examples.first() else {
            return Err(ForecastError::EmptyDataset);
        };
        let width = first.window.len();
        for ex in &examples {
            if ex.window.len() != width {
                return Err(ForecastError::DimensionMismatch(format!(
                    "window lengths differ: {} vs {width}",
                    ex.window.len()
                )));
            }
            if !ex.target.is_finite() || ex.window.iter().any(|v| !v.is_finite()) {
                return Err(ForecastError::InvalidConfig("non-finite dataset entry".into()));
            }
        }
        Ok(Self { examples, split })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Slides a window over a per-minute series, pairing each window with the
/// value `horizon` samples after the window's last sample. Values are
/// multiplied by `scale` on the way in.
pub fn windows_from_series(
    series: &[f64],
    input_window: usize,
    horizon: usize,
    scale: f64,
) -> Vec<Example> {
    let mut out = Vec::new();
    if series.len() < input_window + horizon {
        return out;
    }
    for start in 0..=(series.len() - input_window - horizon) {
        let window: Vec<f64> =
            series[start..start + input_window].iter().map(|v| v * scale).collect();
        let target = series[start + input_window - 1 + horizon] * scale;
        out.push(Example::new(window, target));
    }
    out
}

/// Seeded shuffle followed by an 80/20-style split.
pub fn split_dataset(
    mut examples: Vec<Example>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), ForecastError> {
    if examples.len() < 2 {
        return Err(ForecastError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    examples.shuffle(&mut rng);
    let cut = ((examples.len() as f64) * train_fraction).round() as usize;
    let cut = cut.clamp(1, examples.len() - 1);
    let val = examples.split_off(cut);
    Ok((Dataset::new(examples, Split::Train)?, Dataset::new(val, Split::Validation)?))
}

/// Per-parameter velocity state of the momentum update.
#[derive(Debug, Clone)]
pub struct MomentumOptimizer {
    learning_rate: f64,
    momentum: f64,
    velocity: Vec<f64>,
}

impl MomentumOptimizer {
    pub fn new(learning_rate: f64, momentum: f64, dim: usize) -> Self {
        Self { learning_rate, momentum, velocity: vec![0.0; dim] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), self.velocity.len());
        debug_assert_eq!(grad.len(), self.velocity.len());
        for ((v, p), g) in self.velocity.iter_mut().zip(params).zip(grad) {
            *v = self.momentum * *v + g;
            *p -= self.learning_rate * *v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValCheck {
    pub step: usize,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Validation checks in order, including the step-0 check of the
    /// initial parameters.
    pub checks: Vec<ValCheck>,
    pub steps_run: usize,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Deterministic mini-batch scheduler: a seeded shuffle per epoch, contiguous
/// chunks within it. `batch_size == 0` degenerates to full-batch descent in
/// dataset order.
struct Batcher {
    indices: Vec<usize>,
    batch_size: usize,
    cursor: usize,
    rng: ChaCha8Rng,
}

enum BatchRef {
    /// The batch is the entire dataset, in order.
    Full,
    /// The batch was written into the caller's scratch buffer.
    Scratch,
}

impl Batcher {
    fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        let batch_size = if batch_size == 0 || batch_size >= n { n } else { batch_size };
        let mut b = Self {
            indices: (0..n).collect(),
            batch_size,
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        if b.batch_size < n {
            b.indices.shuffle(&mut b.rng);
        }
        b
    }

    fn next(&mut self, examples: &[Example], scratch: &mut Vec<Example>) -> BatchRef {
        let n = examples.len();
        if self.batch_size == n {
            return BatchRef::Full;
        }
        if self.cursor >= n {
            self.indices.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(n);
        scratch.clear();
        scratch.extend(self.indices[self.cursor..end].iter().map(|&i| examples[i].clone()));
        self.cursor = end;
        BatchRef::Scratch
    }
}

/// Trains `model` on `train_set`, early-stopping on `val_set`, and returns
/// the parameters at the minimum recorded validation loss together with the
/// check history.
pub fn train<M: GradientModel + Clone>(
    model: &M,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(M, TrainReport), ForecastError> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(ForecastError::EmptyDataset);
    }

    let mut work = model.clone();
    let mut params = work.param_vector();
    let mut opt = MomentumOptimizer::new(cfg.learning_rate, cfg.momentum, params.len());
    let mut batcher = Batcher::new(train_set.len(), cfg.batch_size, cfg.rng_seed);
    let mut scratch: Vec<Example> = Vec::new();

    let init_val = work.batch_loss(&val_set.examples)?;
    let mut checks = vec![ValCheck { step: 0, val_loss: init_val }];
    let mut best = (init_val, params.clone(), 0usize);
    let mut non_improving = 0usize;
    let mut stopped_early = false;
    let mut steps_run = 0usize;

    for k in 1..=cfg.max_steps {
        let batch: &[Example] = match batcher.next(&train_set.examples, &mut scratch) {
            BatchRef::Full => &train_set.examples,
            BatchRef::Scratch => &scratch,
        };
        let (loss, grad) = work.loss_and_gradient(batch)?;
        if !loss.is_finite() {
            return Err(ForecastError::NonFiniteLoss { step: k, loss });
        }
        opt.step(&mut params, &grad);
        work.load_param_vector(&params)?;
        steps_run = k;

        if k % cfg.check_every == 0 {
            let val_loss = work.batch_loss(&val_set.examples)?;
            if !val_loss.is_finite() {
                return Err(ForecastError::NonFiniteLoss { step: k, loss: val_loss });
            }
            checks.push(ValCheck { step: k, val_loss });
            if val_loss < best.0 {
                best = (val_loss, params.clone(), k);
                non_improving = 0;
            } else {
                non_improving += 1;
                if non_improving >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    work.load_param_vector(&best.1)?;
    Ok((
        work,
        TrainReport {
            checks,
            steps_run,
            best_step: best.2,
            best_val_loss: best.0,
            stopped_early,
        },
    ))
}
