//! Mini-batch training with MAE loss, RMSProp and a plateau schedule.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{mae_grad, mae_loss};
use super::model::{model_backward, model_forward, Mode, ModelConfig, ModelParams};
use super::optim::{RmsProp, DEFAULT_EPSILON, DEFAULT_RHO};
use crate::error::{Error, Result};
use crate::segment::LabeledWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Dx,
    Dy,
}

impl Target {
    pub fn of(&self, w: &LabeledWindow) -> f64 {
        match self {
            Target::Dx => w.dx,
            Target::Dy => w.dy,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Dx => "dx",
            Target::Dy => "dy",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dx" => Ok(Target::Dx),
            "dy" => Ok(Target::Dy),
            _ => Err(Error::Usage(format!("target must be dx or dy, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr0: f64,
    pub lr_factor: f64,
    /// Epochs without improvement tolerated before the rate drops.
    pub lr_patience: usize,
    /// Smallest validation decrease that counts as improvement.
    pub min_delta: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch: 5,
            lr0: 1e-3,
            lr_factor: 0.2,
            lr_patience: 10,
            min_delta: 1e-4,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::Config("epochs and batch must be at least 1".into()));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::Config(format!("lr_factor {} outside (0, 1)", self.lr_factor)));
        }
        if !(self.lr0 > 0.0) {
            return Err(Error::Config("lr0 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mae: f64,
    pub val_mae: f64,
    pub lr: f64,
}

/// Row 0 evaluates the initial parameters; row e ≥ 1 holds the mean batch
/// loss of epoch e, the validation MAE after it, and the rate it used.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn val_curve(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_mae).collect()
    }

    pub fn train_curve(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_mae).collect()
    }

    /// Population std of successive validation-MAE differences over the
    /// trained epochs.
    pub fn stability(&self) -> f64 {
        let v = self.val_curve();
        let d: Vec<f64> = v.windows(2).skip(1).map(|w| w[1] - w[0]).collect();
        if d.is_empty() {
            return 0.0;
        }
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt()
    }

    pub fn best_val(&self) -> f64 {
        self.epochs.iter().map(|e| e.val_mae).fold(f64::INFINITY, f64::min)
    }
}

pub fn predict(params: &ModelParams, windows: &[LabeledWindow]) -> Result<Vec<f64>> {
    windows
        .iter()
        .map(|w| model_forward(w.x.view(), params, Mode::Infer).map(|r| r.0))
        .collect()
}

pub fn evaluate(params: &ModelParams, windows: &[LabeledWindow], target: Target) -> Result<f64> {
    let pred = predict(params, windows)?;
    let truth: Vec<f64> = windows.iter().map(|w| target.of(w)).collect();
    mae_loss(&pred, &truth)
}

/// Plateau schedule state.
#[derive(Debug, Clone, Copy)]
struct Plateau {
    best: f64,
    wait: usize,
}

impl Plateau {
    /// Returns true when the rate should drop after this epoch.
    fn observe(&mut self, val: f64, cfg: &TrainConfig) -> bool {
        if val < self.best - cfg.min_delta {
            self.best = val;
            self.wait = 0;
            return false;
        }
        self.wait += 1;
        if self.wait > cfg.lr_patience {
            self.wait = 0;
            return true;
        }
        false
    }
}

/// Train one model for one target.
pub fn train_model(
    train: &[LabeledWindow],
    val: &[LabeledWindow],
    model: ModelConfig,
    cfg: &TrainConfig,
    target: Target,
) -> Result<(ModelParams, History)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptySplit(format!(
            "{} train / {} val windows",
            train.len(),
            val.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(model, rng.next_u64())?;
    let mut opt = RmsProp::new(&params, cfg.rho, cfg.epsilon);
    let mut lr = cfg.lr0;
    let mut history = History::default();
    let initial_val = evaluate(&params, val, target)?;
    history.epochs.push(EpochRecord {
        epoch: 0,
        train_mae: evaluate(&params, train, target)?,
        val_mae: initial_val,
        lr,
    });
    let mut plateau = Plateau {
        best: initial_val,
        wait: 0,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch).enumerate() {
            let mut preds = Vec::with_capacity(batch.len());
            let mut caches = Vec::with_capacity(batch.len());
            for &i in batch {
                let seed = rng.next_u64();
                let (y, cache) = model_forward(train[i].x.view(), &params, Mode::Train { seed })?;
                preds.push(y);
                caches.push(cache);
            }
            let truth: Vec<f64> = batch.iter().map(|&i| target.of(&train[i])).collect();
            let loss = mae_loss(&preds, &truth)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss at epoch {epoch}, batch {b}"
                )));
            }
            loss_sum += loss * batch.len() as f64;
            let dy = mae_grad(&preds, &truth)?;
            let mut grad = params.zeros_like();
            for (cache, d) in caches.iter().zip(dy) {
                if d != 0.0 {
                    grad.add_assign(&model_backward(&params, cache, d)?);
                }
            }
            opt.step(&mut params, &grad, lr)?;
        }
        let val_mae = evaluate(&params, val, target)?;
        if !val_mae.is_finite() {
            return Err(Error::Divergence(format!("non-finite validation MAE at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_mae: loss_sum / train.len() as f64,
            val_mae,
            lr,
        };
        log::debug!(
            "{target} epoch {epoch}: train {:.4} val {:.4} lr {:.2e}",
            record.train_mae,
            val_mae,
            lr
        );
        history.epochs.push(record);
        if plateau.observe(val_mae, cfg) {
            lr *= cfg.lr_factor;
            log::info!("{target} epoch {epoch}: learning rate reduced to {lr:.2e}");
        }
    }
    Ok((params, history))
}
