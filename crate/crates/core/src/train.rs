//! Loss, optimiser, schedules and the training loop.

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::model::{Model, ParamStore};
use crate::rng::{streams, SeedStream};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

/// Windows per forward pass during evaluation.
const EVAL_CHUNK: usize = 64;

/// `(1/N)·Σ(pred − target)²` over two equally shaped tensors.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(Error::dim("mse_loss", tape.shape(pred), tape.shape(target)));
    }
    if tape.value(pred).numel() == 0 {
        return Err(Error::contract("mse_loss on empty input"));
    }
    let diff = tape.sub(pred, target)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq))
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair("mse", pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

pub fn mae_metric(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair("mae_metric", pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

fn check_pair(op: &'static str, pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::dim(op, &[pred.len()], &[target.len()]));
    }
    if pred.is_empty() {
        return Err(Error::contract(format!("{op} on empty input")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    #[default]
    Cosine,
    Plateau,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub scheduler: Scheduler,
    /// Cosine floor.
    pub lr_min: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    /// Drives mini-batch shuffling.
    pub seed: u64,
    /// Record elapsed seconds in the metrics; off keeps the CSV reproducible.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 0.01,
            betas: [0.9, 0.999],
            eps: 1e-8,
            epochs: 45,
            batch_size: 32,
            scheduler: Scheduler::Cosine,
            lr_min: 0.0,
            plateau_factor: 0.5,
            plateau_patience: 5,
            early_stop_patience: 10,
            seed: 42,
            log_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted so a null-update run can be expressed.
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config("train.lr", "must be finite and >= 0"));
        }
        if !(self.lr_min.is_finite() && self.lr_min >= 0.0 && self.lr_min <= self.lr) {
            return Err(Error::config("train.lr_min", "must lie in [0, lr]"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("train.weight_decay", "must be finite and >= 0"));
        }
        for (i, b) in self.betas.iter().enumerate() {
            if !(0.0..1.0).contains(b) {
                return Err(Error::config(format!("train.betas[{i}]"), "must lie in [0, 1)"));
            }
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(Error::config("train.eps", "must be finite and >= 0"));
        }
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return Err(Error::config("train.plateau_factor", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.entries().iter().map(|e| vec![0.0; e.tensor.numel()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One AdamW update with bias correction at step `t` (1-based) and learning
/// rate `lr`. Decay applies to parameters whose kind decays.
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &TrainConfig,
    lr: f64,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(Error::contract("adamw step index starts at 1"));
    }
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::contract(format!(
            "adamw: {n} parameters, {} gradients, {} moment buffers",
            grads.len(),
            state.m.len()
        )));
    }
    let [b1, b2] = cfg.betas;
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for (i, e) in params.entries_mut().iter_mut().enumerate() {
        let g = grads[i].data();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        if g.len() != e.tensor.numel() || m.len() != g.len() || v.len() != g.len() {
            return Err(Error::contract(format!("adamw: shape mismatch for {}", e.path)));
        }
        let wd = if e.kind.decays() { cfg.weight_decay } else { 0.0 };
        for (j, p) in e.tensor.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *p -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + wd * *p);
        }
    }
    Ok(())
}

pub fn cosine_lr(epoch: usize, total_epochs: usize, lr_max: f64, lr_min: f64) -> Result<f64> {
    if total_epochs == 0 {
        return Err(Error::contract("cosine_lr with zero total epochs"));
    }
    if epoch > total_epochs {
        return Err(Error::contract(format!("epoch {epoch} beyond total {total_epochs}")));
    }
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (PI * epoch as f64 / total_epochs as f64).cos()))
}

/// Predictions for every window, in order.
pub fn predict_dataset(model: &Model, ds: &WindowedDataset) -> Result<Vec<f64>> {
    let windows: Vec<&[f64]> = ds.windows().collect();
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(EVAL_CHUNK) {
        out.extend(model.predict(chunk)?);
    }
    Ok(out)
}

/// `(mse, mae)` over all windows.
pub fn evaluate(model: &Model, ds: &WindowedDataset) -> Result<(f64, f64)> {
    if ds.is_empty() {
        return Err(Error::contract("evaluate on an empty dataset"));
    }
    let pred = predict_dataset(model, ds)?;
    Ok((mse(&pred, ds.targets())?, mae_metric(&pred, ds.targets())?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: Split,
    pub mse: f64,
    pub mae: f64,
    pub lr: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MSE.
    pub best: Model,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    /// Two rows per completed epoch, train then val.
    pub history: Vec<EpochMetrics>,
    /// Validation predictions after each epoch.
    pub val_predictions: Vec<Vec<f64>>,
    /// Mean mini-batch loss per epoch.
    pub batch_loss: Vec<f64>,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn val_history(&self) -> impl Iterator<Item = &EpochMetrics> {
        self.history.iter().filter(|m| m.split == Split::Val)
    }

    pub fn final_val(&self) -> Option<&EpochMetrics> {
        self.val_history().last()
    }
}

/// Mini-batch order for one epoch; depends only on `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    SeedStream::new(seed, streams::SHUFFLE + epoch as u64).permutation(n)
}

struct Plateau {
    best: f64,
    bad: usize,
}

/// Trains a copy of `model`. `model` itself is not modified.
pub fn train(
    model: &Model,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::contract("train and validation sets must be non-empty"));
    }
    let start = Instant::now();
    let mut current = model.clone();
    let mut state = AdamState::new(current.params());
    let mut step = 0u64;
    let mut lr = cfg.lr;
    let mut plateau = Plateau {
        best: f64::INFINITY,
        bad: 0,
    };
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_val = f64::INFINITY;
    let mut history = Vec::with_capacity(2 * cfg.epochs);
    let mut val_predictions = Vec::new();
    let mut batch_loss = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        if cfg.scheduler == Scheduler::Cosine {
            lr = cosine_lr(epoch, cfg.epochs, cfg.lr, cfg.lr_min)?;
        }
        let order = epoch_order(cfg.seed, epoch, train_set.len());
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let windows: Vec<&[f64]> = idx.iter().map(|&k| train_set.window(k)).collect();
            let targets: Vec<f64> = idx.iter().map(|&k| train_set.target(k)).collect();
            let (loss, grads) = current.loss_and_grads(&windows, &targets)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            step += 1;
            adamw_step(current.params_mut(), &grads, &mut state, cfg, lr, step)?;
            loss_sum += loss;
            batches += 1;
        }
        batch_loss.push(loss_sum / batches as f64);

        let wall = if cfg.log_wall_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let (tr_mse, tr_mae) = evaluate(&current, train_set)?;
        let val_pred = predict_dataset(&current, val_set)?;
        let val_mse = mse(&val_pred, val_set.targets())?;
        let val_mae = mae_metric(&val_pred, val_set.targets())?;
        if !val_mse.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: batches,
            });
        }
        for (split, m, a) in [(Split::Train, tr_mse, tr_mae), (Split::Val, val_mse, val_mae)] {
            history.push(EpochMetrics {
                epoch,
                split,
                mse: m,
                mae: a,
                lr,
                wall_time_s: wall,
            });
        }
        val_predictions.push(val_pred);

        if val_mse < best_val {
            best_val = val_mse;
            best_epoch = epoch;
            best = current.clone();
        }
        if cfg.scheduler == Scheduler::Plateau {
            if val_mse < plateau.best {
                plateau = Plateau { best: val_mse, bad: 0 };
            } else {
                plateau.bad += 1;
                if plateau.bad > cfg.plateau_patience {
                    lr *= cfg.plateau_factor;
                    plateau.bad = 0;
                }
            }
        }
        if epoch - best_epoch >= cfg.early_stop_patience {
            stopped_early = epoch + 1 < cfg.epochs;
            break;
        }
    }

    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_mse: best_val,
        history,
        val_predictions,
        batch_loss,
        stopped_early,
    })
}

/// Header `epoch,split,mse,mae,lr,wall_time_s`.
pub fn write_metrics_csv<W: Write>(history: &[EpochMetrics], mut w: W) -> Result<()> {
    w.write_all(b"epoch,split,mse,mae,lr,wall_time_s\n")?;
    for m in history {
        writeln!(
            w,
            "{},{},{:?},{:?},{:?},{:?}",
            m.epoch,
            m.split.name(),
            m.mse,
            m.mae,
            m.lr,
            m.wall_time_s
        )?;
    }
    Ok(())
}

/// Header `epoch,window_id,prediction,target`.
pub fn write_predictions_csv<W: Write>(predictions: &[Vec<f64>], targets: &[f64], mut w: W) -> Result<()> {
    w.write_all(b"epoch,window_id,prediction,target\n")?;
    for (epoch, preds) in predictions.iter().enumerate() {
        for (k, (p, t)) in preds.iter().zip(targets).enumerate() {
            writeln!(w, "{epoch},{k},{p:?},{t:?}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ParamKind, Variant};

    #[test]
    fn mse_examples() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![0.0, 0.0]));
        let t = tape.constant(Tensor::vector(vec![1.0, -1.0]));
        let l = mse_loss(&mut tape, p, t).unwrap();
        assert_eq!(tape.value(l).item(), 1.0);
        let g = tape.backward(l).unwrap().wrt(p);
        assert_eq!(g.data(), &[-1.0, 1.0]);
        let q = tape.constant(Tensor::vector(vec![1.0]));
        assert!(matches!(mse_loss(&mut tape, p, q), Err(Error::Dimension { .. })));
        assert_eq!(mse(&[2.0, 3.0], &[2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae_metric(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae_metric(&[0.0], &[3.0]).unwrap(), 3.0);
        assert!(matches!(mae_metric(&[0.0], &[]), Err(Error::Dimension { .. })));
    }

    fn one_param(kind: ParamKind, value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.push("p", kind, Tensor::vector(vec![value]));
        s
    }

    #[test]
    fn adamw_examples() {
        let cfg = TrainConfig {
            betas: [0.0, 0.0],
            eps: 0.0,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut p = one_param(ParamKind::Weight, 1.0);
        let mut st = AdamState::new(&p);
        adamw_step(&mut p, &[Tensor::vector(vec![1.0])], &mut st, &cfg, 0.1, 1).unwrap();
        assert!((p.tensor(0).data()[0] - 0.9).abs() < 1e-15);

        let cfg = TrainConfig {
            weight_decay: 0.01,
            ..TrainConfig::default()
        };
        let mut p = one_param(ParamKind::Weight, 1.0);
        let mut st = AdamState::new(&p);
        adamw_step(&mut p, &[Tensor::vector(vec![0.0])], &mut st, &cfg, 0.1, 1).unwrap();
        assert!((p.tensor(0).data()[0] - 0.999).abs() < 1e-15);

        let mut b = one_param(ParamKind::Bias, 1.0);
        let mut st = AdamState::new(&b);
        adamw_step(&mut b, &[Tensor::vector(vec![0.0])], &mut st, &cfg, 0.1, 1).unwrap();
        assert_eq!(b.tensor(0).data()[0], 1.0);

        assert!(matches!(
            adamw_step(&mut b, &[], &mut st, &cfg, 0.1, 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_lr(0, 10, 1.0, 0.0).unwrap(), 1.0);
        assert!(cosine_lr(10, 10, 1.0, 0.1).unwrap() - 0.1 < 1e-15);
        assert!((cosine_lr(5, 10, 1.0, 0.2).unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(cosine_lr(0, 0, 1.0, 0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn epoch_order_is_seeded_permutation() {
        let a = epoch_order(3, 1, 50);
        assert_eq!(a, epoch_order(3, 1, 50));
        assert_ne!(a, epoch_order(3, 2, 50));
        let mut s = a.clone();
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }

    fn tiny_data() -> (WindowedDataset, WindowedDataset) {
        let s: Vec<f64> = (0..40).map(|k| (k as f64 * 0.3).sin()).collect();
        let ds = crate::data::window(&s, 4).unwrap();
        let (tr, va, _) = crate::data::split_and_standardize(&ds, 0.8).unwrap();
        (tr, va)
    }

    fn tiny_model(v: Variant) -> Model {
        Model::new(ModelConfig {
            seq_len: 4,
            d_model: 8,
            heads: 2,
            d_ff: 8,
            layers: 2,
            qubits: 2,
            q_layers: 1,
            ..ModelConfig::desk(v)
        })
        .unwrap()
    }

    #[test]
    fn null_update_keeps_parameters() {
        let (tr, va) = tiny_data();
        let m = tiny_model(Variant::Qasa);
        let cfg = TrainConfig {
            lr: 0.0,
            weight_decay: 0.0,
            epochs: 3,
            ..TrainConfig::default()
        };
        let out = train(&m, &tr, &va, &cfg).unwrap();
        assert_eq!(out.best.params(), m.params());
        let vals: Vec<f64> = out.val_history().map(|r| r.mse).collect();
        assert!(vals.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn training_is_deterministic_and_early_stops() {
        let (tr, va) = tiny_data();
        let m = tiny_model(Variant::Transformer);
        let cfg = TrainConfig {
            lr: 1e-3,
            epochs: 6,
            batch_size: 8,
            early_stop_patience: 2,
            ..TrainConfig::default()
        };
        let a = train(&m, &tr, &va, &cfg).unwrap();
        let b = train(&m, &tr, &va, &cfg).unwrap();
        let csv = |o: &TrainOutcome| {
            let mut v = Vec::new();
            write_metrics_csv(&o.history, &mut v).unwrap();
            v
        };
        assert_eq!(csv(&a), csv(&b));
        let last = a.history.last().unwrap().epoch;
        assert!(last - a.best_epoch <= cfg.early_stop_patience);
        let (re, _) = evaluate(&a.best, &va).unwrap();
        assert!((re - a.best_val_mse).abs() < 1e-12);
    }

    #[test]
    fn metrics_csv_header() {
        let mut v = Vec::new();
        write_metrics_csv(
            &[EpochMetrics {
                epoch: 0,
                split: Split::Val,
                mse: 0.5,
                mae: 0.25,
                lr: 1e-4,
                wall_time_s: 0.0,
            }],
            &mut v,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(v).unwrap(),
            "epoch,split,mse,mae,lr,wall_time_s\n0,val,0.5,0.25,0.0001,0.0\n"
        );
    }
}
