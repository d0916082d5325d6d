//! Standardization, windowing, Adam, early-stopped training, metrics and
//! the finite-difference gradient check.

mod adam;
mod data;
mod gradcheck;
mod metrics;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer::{ForecastModel, LossKind, ModelConfig, Mode};

pub use adam::Adam;
pub use data::{standardize, window, Standardized, WindowedDataset, Windows};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport, FULL_CHECK_LIMIT, RELATIVE_FLOOR};
pub use metrics::{
    evaluate, evaluate_batched, loss, loss_and_grad, metrics, persistence_metrics, Metrics,
    EVAL_BATCH,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub loss: LossKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Long regime: 1000 epochs, patience 10.
    pub const PROPER: (usize, usize) = (1000, 10);
    /// Short regime: 200 epochs, patience 5.
    pub const STRICT: (usize, usize) = (200, 5);

    pub fn for_model(model: &ModelConfig, (max_epochs, patience): (usize, usize)) -> Self {
        Self {
            max_epochs,
            patience,
            loss: model.loss,
            learning_rate: model.learning_rate,
            batch_size: model.batch_size,
            seed: model.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("batch", self.batch_size),
        ] {
            if v == 0 {
                return Err(Error::InvalidValue {
                    key: key.into(),
                    reason: "must be at least 1".into(),
                });
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidValue {
                key: "learning_rate".into(),
                reason: format!("{} must be positive", self.learning_rate),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    /// 1-based epoch of the returned snapshot.
    pub best_epoch: usize,
    pub wall_seconds: f64,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub fn best_valid_loss(&self) -> f64 {
        self.valid_loss[self.best_epoch - 1]
    }

    /// `epoch,train_loss,valid_loss` with round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,valid_loss\n");
        for (i, (t, v)) in self.train_loss.iter().zip(&self.valid_loss).enumerate() {
            writeln!(out, "{},{:?},{:?}", i + 1, t, v).unwrap();
        }
        out
    }
}

/// Per-epoch progress passed to [`train_with`] observers.
#[derive(Clone, Copy, Debug)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub improved: bool,
}

/// Patience-based stopping on a loss that should decrease.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
            epoch: 0,
        }
    }

    /// Records one epoch's loss; returns whether it is a new best.
    pub fn record(&mut self, loss: f64) -> bool {
        self.epoch += 1;
        if loss < self.best {
            self.best = loss;
            self.best_epoch = self.epoch;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Splits a shuffled order into minibatches. A trailing batch of one sample
/// joins the previous batch, since batch norm needs two samples.
fn minibatches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut batches: Vec<&[usize]> = order.chunks(size).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        batches.pop();
        let start = order.len() - 1 - batches.last().unwrap().len();
        *batches.last_mut().unwrap() = &order[start..];
    }
    batches
}

fn valid_loss(model: &ForecastModel, windows: &Windows, kind: LossKind) -> Result<f64> {
    let m = evaluate(model, windows)?;
    Ok(match kind {
        LossKind::Mse => m.mse,
        LossKind::Mae => m.mae,
    })
}

pub fn train(
    model: ForecastModel,
    data: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<(ForecastModel, TrainHistory)> {
    train_with(model, data, cfg, |_| {})
}

/// Minibatch Adam with per-epoch seeded shuffling and early stopping on the
/// validation loss. Returns the parameters of the best validation epoch.
pub fn train_with(
    mut model: ForecastModel,
    data: &WindowedDataset,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochReport),
) -> Result<(ForecastModel, TrainHistory)> {
    cfg.validate()?;
    if data.train.len() < 2 || data.valid.is_empty() {
        return Err(Error::Config(format!(
            "need at least 2 training and 1 validation windows, got {} and {}",
            data.train.len(),
            data.valid.len()
        )));
    }
    let started = Instant::now();
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.learning_rate);
    let mut history = TrainHistory::default();
    let mut best = model.clone();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let mut shuffle = ChaCha8Rng::seed_from_u64(seeds.next_u64());
        let mut drop_rng = ChaCha8Rng::seed_from_u64(seeds.next_u64());
        order.sort_unstable();
        order.shuffle(&mut shuffle);

        let mut weighted = 0.0;
        for (b, batch) in minibatches(&order, cfg.batch_size).into_iter().enumerate() {
            let (x, y) = data.train.batch(batch)?;
            let (pred, cache) = model.forward(&x, &mut Mode::Train(&mut drop_rng))?;
            let (l, upstream) = match loss_and_grad(&pred, &y, cfg.loss) {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => return Err(Error::Divergence { epoch, batch: b }),
                Err(e) => return Err(e),
            };
            let (_, grads) = model.backward(&cache, &upstream)?;
            model.absorb_batch_stats(&cache);
            if adam.step(&mut model, &grads).is_err() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            weighted += l * batch.len() as f64;
        }
        let train_loss = weighted / order.len() as f64;
        let valid = valid_loss(&model, &data.valid, cfg.loss)?;
        history.train_loss.push(train_loss);
        history.valid_loss.push(valid);

        let improved = stopper.record(valid);
        observe(&EpochReport {
            epoch,
            train_loss,
            valid_loss: valid,
            improved,
        });
        if improved {
            best = model.clone();
            history.best_epoch = epoch;
        } else if stopper.should_stop() {
            break;
        }
    }
    history.wall_seconds = started.elapsed().as_secs_f64();
    Ok((best, history))
}
