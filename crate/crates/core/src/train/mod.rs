//! Optimisation loop, losses, metrics and evaluation.

mod history;
mod optim;

pub use history::{EpochRecord, TrainHistory, HISTORY_HEADER};
pub use optim::{adam_step, clip_global_norm, sgd_step, AdamState, Optimizer};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Split, WindowedDataset};
use crate::error::{Error, Result};
use crate::model::{forward, predict, ArchConfig, Bound, GraphContext, ModelParams};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Global gradient-norm limit; 0 disables clipping.
    pub grad_clip_norm: f64,
    /// Writes measured epoch durations into the history; off by default so
    /// that identical runs produce identical files.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 50,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            early_stop_patience: 20,
            seed: 0,
            grad_clip_norm: 5.0,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.early_stop_patience == 0 {
            return Err(Error::Validation(
                "epochs, batch_size and early_stop_patience must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.grad_clip_norm >= 0.0 && self.grad_clip_norm.is_finite()) {
            return Err(Error::Validation(format!("grad_clip_norm must be non-negative, got {}", self.grad_clip_norm)));
        }
        self.optimizer.validate()
    }
}

/// Squared error summed over every element, divided by the batch size.
pub fn l2_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(Error::dim(
            "l2_loss",
            format!("prediction {:?} vs target {:?}", tape.shape(pred), tape.shape(target)),
        ));
    }
    let b = tape.shape(pred).first().copied().unwrap_or(1).max(1);
    let d = tape.sub(pred, target)?;
    let sq = tape.mul(d, d)?;
    let s = tape.sum(sq);
    Ok(tape.scale(s, 1.0 / b as f64))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
}

pub fn metrics(pred: &Tensor, target: &Tensor) -> Result<Metrics> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(
            "metrics",
            format!("prediction {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    if pred.numel() == 0 {
        return Err(Error::EmptyDataset("no elements to score".into()));
    }
    let (mut se, mut ae) = (0.0, 0.0);
    for (p, t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        se += d * d;
        ae += d.abs();
    }
    let k = pred.numel() as f64;
    Ok(Metrics { mse: se / k, mae: ae / k })
}

/// Owns parameters and optimiser state and applies one update per call.
pub struct Trainer<'a> {
    params: ModelParams,
    ctx: &'a GraphContext,
    cfg: TrainConfig,
    adam: AdamState,
    tape: Tape,
}

impl<'a> Trainer<'a> {
    pub fn new(params: ModelParams, ctx: &'a GraphContext, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = AdamState::new(params.tensors(), &cfg.optimizer);
        Ok(Trainer { params, ctx, cfg: cfg.clone(), adam, tape: Tape::new() })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// One optimiser step on `(x, y)`; returns the loss before the update.
    pub fn step(&mut self, x: &Tensor, y: &Tensor) -> Result<f64> {
        let tape = &mut self.tape;
        tape.reset();
        let bound: Bound = self.params.bind(tape, true);
        let (a, e) = self.ctx.bind(tape);
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let pred = forward(tape, xv, &bound, a, e, self.params.arch())?;
        let loss = l2_loss(tape, pred, yv)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("loss is {value}")));
        }
        tape.backward(loss)?;
        let mut grads: Vec<Tensor> = bound
            .vars()
            .iter()
            .zip(self.params.tensors())
            .map(|(&v, p)| tape.grad(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        for (g, name) in grads.iter().zip(self.params.names()) {
            if !g.all_finite() {
                return Err(Error::Numeric(format!("non-finite gradient for parameter {name}")));
            }
        }
        if self.cfg.grad_clip_norm > 0.0 {
            clip_global_norm(&mut grads, self.cfg.grad_clip_norm);
        }
        let names = self.params.names().to_vec();
        let lr = self.cfg.learning_rate;
        match self.cfg.optimizer {
            Optimizer::Adam { .. } => adam_step(self.params.tensors_mut(), &names, &grads, &mut self.adam, lr)?,
            Optimizer::Sgd => sgd_step(self.params.tensors_mut(), &names, &grads, lr)?,
        }
        Ok(value)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MSE.
    pub params: ModelParams,
    pub history: TrainHistory,
}

pub fn train_loop(
    data: &WindowedDataset,
    ctx: &GraphContext,
    arch: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_inputs(data, ctx, arch)?;
    for split in [Split::Train, Split::Val] {
        if data.indices(split).is_empty() {
            return Err(Error::EmptyDataset(format!("{split:?} split has no windows")));
        }
    }
    let mut trainer = Trainer::new(ModelParams::init(arch, cfg.seed)?, ctx, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546_464C_4531);
    let mut order: Vec<usize> = data.indices(Split::Train).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = data.batch(chunk);
            let loss = trainer.step(&x, &y).map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, batch {bi}: {msg}")),
                other => other,
            })?;
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / order.len() as f64;
        let val = evaluate(trainer.params(), data, Split::Val, ctx, cfg.batch_size)?;
        let elapsed = started.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch}: train_loss {train_loss:.6} val_mse {:.6} val_mae {:.6} ({elapsed:.2}s)",
            val.metrics.mse,
            val.metrics.mae
        );
        history.entries.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: val.loss,
            val_mse: val.metrics.mse,
            val_mae: val.metrics.mae,
            wall_time_s: if cfg.record_wall_time { elapsed } else { 0.0 },
        });
        if best.as_ref().is_none_or(|(m, _)| val.metrics.mse < *m) {
            best = Some((val.metrics.mse, trainer.params().clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                log::info!("early stop after epoch {epoch}; best epoch {}", history.best_epoch);
                history.stopped_early = true;
                break;
            }
        }
    }
    let params = best.map(|(_, p)| p).expect("at least one epoch ran");
    Ok(TrainOutcome { params, history })
}

fn check_inputs(data: &WindowedDataset, ctx: &GraphContext, arch: &ArchConfig) -> Result<()> {
    arch.validate()?;
    if data.n() != ctx.n() {
        return Err(Error::dim("train", format!("dataset has {} nodes, graph has {}", data.n(), ctx.n())));
    }
    if data.input_steps() != arch.input_steps || data.horizon() != arch.horizon {
        return Err(Error::Validation(format!(
            "windows are M={}, H={} but the model expects M={}, H={}",
            data.input_steps(),
            data.horizon(),
            arch.input_steps,
            arch.horizon
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub metrics: Metrics,
    /// Mean per-window L2 loss: squared error summed over horizons and nodes.
    pub loss: f64,
    /// `[S, H, n]`
    pub predictions: Tensor,
    /// `[S, H, n]`
    pub targets: Tensor,
}

/// Scores `params` over every window in `split`.
pub fn evaluate(
    params: &ModelParams,
    data: &WindowedDataset,
    split: Split,
    ctx: &GraphContext,
    batch_size: usize,
) -> Result<Evaluation> {
    check_inputs(data, ctx, params.arch())?;
    let idx: Vec<usize> = data.indices(split).collect();
    if idx.is_empty() {
        return Err(Error::EmptyDataset(format!("{split:?} split has no windows")));
    }
    let mut preds = Vec::with_capacity(idx.len() * data.horizon() * data.n());
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, _) = data.batch(chunk);
        preds.extend_from_slice(predict(params, ctx, &x)?.data());
    }
    score(data, &idx, preds)
}

/// Repeats the last observed row for every horizon.
pub fn persistence_baseline(data: &WindowedDataset, split: Split) -> Result<Evaluation> {
    let idx: Vec<usize> = data.indices(split).collect();
    if idx.is_empty() {
        return Err(Error::EmptyDataset(format!("{split:?} split has no windows")));
    }
    let (m, h, n) = (data.input_steps(), data.horizon(), data.n());
    let mut preds = Vec::with_capacity(idx.len() * h * n);
    for &s in &idx {
        let last = &data.input(s)[(m - 1) * n..];
        for _ in 0..h {
            preds.extend_from_slice(last);
        }
    }
    score(data, &idx, preds)
}

fn score(data: &WindowedDataset, idx: &[usize], preds: Vec<f64>) -> Result<Evaluation> {
    let shape = vec![idx.len(), data.horizon(), data.n()];
    let targets: Vec<f64> = idx.iter().flat_map(|&s| data.target(s).iter().copied()).collect();
    let predictions = Tensor::new(shape.clone(), preds)?;
    let targets = Tensor::new(shape, targets)?;
    let metrics = metrics(&predictions, &targets)?;
    let per_window = (data.horizon() * data.n()) as f64;
    Ok(Evaluation { metrics, loss: metrics.mse * per_window, predictions, targets })
}
