use std::fmt::Write;
use std::ops::ControlFlow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::{examples, group, groups_loss, plan_batches, sequential_batches, BatchMode, Example};
use super::windows::TrainingWindow;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{adam_step, AdamConfig, Graph};

/// Which loss drives early stopping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StopOn {
    #[default]
    Validation,
    Train,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    /// Consecutive epochs of rising loss that end training.
    pub patience: usize,
    pub seq_len: usize,
    pub seed: u64,
    pub stop_on: StopOn,
    pub batching: BatchMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            lr: 5e-4,
            max_epochs: 100,
            patience: 3,
            seq_len: 50,
            seed: 0,
            stop_on: StopOn::Validation,
            batching: BatchMode::Prefix,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.seq_len == 0 {
            return Err(Error::invalid("batch_size, patience and seq_len must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-target loss over the epoch's batches, each measured before
    /// its update.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters restored to the best epoch.
    pub model: Model,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Hooks into the epoch loop.
pub trait TrainObserver {
    /// Replaces the measured validation loss of an epoch.
    fn val_loss(&mut self, _epoch: usize, measured: f64) -> f64 {
        measured
    }

    /// Called after each epoch's bookkeeping; `Break` ends training.
    fn on_epoch_end(&mut self, _model: &Model, _record: &EpochRecord) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Mean per-target loss of `model` on `windows`.
pub fn mean_loss(model: &Model, windows: &[TrainingWindow], mode: BatchMode, batch_size: usize) -> Result<f64> {
    let ex = examples(windows, mode);
    mean_loss_examples(model, windows, &ex, batch_size)
}

fn mean_loss_examples(model: &Model, windows: &[TrainingWindow], ex: &[Example], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    for batch in sequential_batches(ex, batch_size) {
        let groups = group(&batch, ex, windows);
        let n: usize = groups.iter().map(|g| g.targets.rows.len()).sum();
        let mut g = Graph::new(&model.params);
        let l = groups_loss(&mut g, model, &groups)?;
        total += g.value(l).data()[0] * n as f64;
    }
    Ok(total / windows.len() as f64)
}

/// Runs Adam over shuffled batches until the stopping rule fires or the
/// epoch budget is spent, then restores the best epoch's parameters.
///
/// The stopping loss is compared with the previous epoch's; `patience`
/// consecutive rises stop training. Without validation windows the train
/// loss is used.
pub fn train(
    mut model: Model,
    train_windows: &[TrainingWindow],
    val_windows: &[TrainingWindow],
    cfg: &TrainConfig,
    observer: &mut impl TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_windows.is_empty() {
        return Err(Error::invalid("no training windows"));
    }
    let adam = AdamConfig::with_lr(cfg.lr);
    let train_ex = examples(train_windows, cfg.batching);
    let val_ex = examples(val_windows, cfg.batching);

    let mut log: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(f64, usize, Vec<crate::numerics::Tensor>)> = None;
    let mut rises = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut sum = 0.0;
        for (bi, batch) in plan_batches(&train_ex, cfg.batch_size, &mut rng).into_iter().enumerate() {
            let groups = group(&batch, &train_ex, train_windows);
            let n: usize = groups.iter().map(|g| g.targets.rows.len()).sum();
            let grads = {
                let mut g = Graph::new(&model.params);
                let l = groups_loss(&mut g, &model, &groups)?;
                let v = g.value(l).data()[0];
                if !v.is_finite() {
                    return Err(Error::Diverged { epoch, batch: bi + 1, loss: v });
                }
                sum += v * n as f64;
                g.backward(l)?
            };
            model.params.accumulate(&grads);
            adam_step(&mut model.params, &adam);
        }
        let train_loss = sum / train_windows.len() as f64;
        let measured = if val_ex.is_empty() {
            train_loss
        } else {
            mean_loss_examples(&model, val_windows, &val_ex, cfg.batch_size.max(256))?
        };
        let val_loss = observer.val_loss(epoch, measured);
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: 0, loss: val_loss });
        }
        let record = EpochRecord { epoch, train_loss, val_loss };

        let watched = match cfg.stop_on {
            StopOn::Validation => val_loss,
            StopOn::Train => train_loss,
        };
        if let Some(prev) = log.last() {
            let prev = match cfg.stop_on {
                StopOn::Validation => prev.val_loss,
                StopOn::Train => prev.train_loss,
            };
            rises = if watched > prev { rises + 1 } else { 0 };
        }
        if best.as_ref().is_none_or(|b| watched < b.0) {
            best = Some((watched, epoch, model.params.snapshot()));
        }
        log.push(record);

        let flow = observer.on_epoch_end(&model, &record);
        if rises >= cfg.patience {
            stopped_early = true;
            break;
        }
        if flow.is_break() {
            break;
        }
    }

    let best_epoch = match best {
        Some((_, epoch, snap)) => {
            model.params.restore(&snap)?;
            epoch
        }
        None => 0,
    };
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        stopped_early,
    })
}

/// `epoch<TAB>train_loss<TAB>val_loss` per line.
pub fn format_loss_log(log: &[EpochRecord]) -> String {
    let mut s = String::new();
    for r in log {
        writeln!(s, "{}\t{}\t{}", r.epoch, r.train_loss, r.val_loss).unwrap();
    }
    s
}

pub fn parse_loss_log(text: &str) -> Result<Vec<EpochRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            let bad = || Error::invalid(format!("loss log line {}: {l:?}", i + 1));
            if f.len() != 3 {
                return Err(bad());
            }
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: f[1].parse().map_err(|_| bad())?,
                val_loss: f[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
