//! Mini-batch training of a regression head: Huber loss, Adam with coupled
//! L2 weight decay, and a learning rate halved after every epoch.
//!
//! Adam's decay factors follow the original training setup: `beta1 = 0.95`
//! for the gradient average and `beta2 = 0.9` for the squared gradient.
//! Note that `beta1 > beta2` here, the reverse of the usual defaults.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Degenerate, Metrics};
use crate::nn::{Mode, Parameters, Regressor};
use crate::par::Exec;
use crate::types::{derive_seed, rng_from_seed, FeatureSequence, Rng};

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Multiplier applied to the learning rate after each epoch.
    pub lr_factor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub huber_delta: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 2e-4,
            lr_factor: 0.5,
            epochs: 5,
            batch_size: 16,
            l2: 1e-5,
            beta1: 0.95,
            beta2: 0.9,
            adam_eps: 1e-8,
            huber_delta: 1.0 / 9.0,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr0", self.lr0),
            ("lr_factor", self.lr_factor),
            ("adam_eps", self.adam_eps),
            ("huber_delta", self.huber_delta),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::Validation(format!("l2 must be non-negative, got {}", self.l2)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Validation(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation("epochs and batch_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Learning rate of 0-based `epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_factor.powi(epoch as i32)
    }
}

/// Huber loss of `pred - target` and its derivative with respect to `pred`.
pub fn huber(pred: f64, target: f64, delta: f64) -> (f64, f64) {
    let e = pred - target;
    if e.abs() <= delta {
        (0.5 * e * e, e)
    } else {
        (delta * (e.abs() - 0.5 * delta), delta * e.signum())
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One Adam update of a single tensor at step `t` (already incremented).
/// `l2` is added as `l2 * theta` to the gradient first.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    l2: f64,
    cfg: &TrainConfig,
) {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..theta.len() {
        let g = grad[i] + l2 * theta[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
}

/// Applies one Adam step to every tensor. Weight decay applies to tensors
/// flagged for it (weights, not biases).
pub fn adam_step<P: Parameters>(params: &mut P, grads: &P, state: &mut AdamState, lr: f64, cfg: &TrainConfig) -> Result<()> {
    let grads = grads.tensors();
    let tensors = params.tensors_mut();
    if tensors.len() != grads.len() || tensors.len() != state.m.len() || tensors.len() != state.v.len() {
        return Err(Error::Shape(format!(
            "{} parameter tensors, {} gradients, {} moment buffers",
            tensors.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), (m, v)) in tensors.iter().zip(&grads).zip(state.m.iter().zip(&state.v)) {
        if p.data.len() != g.data.len() || p.data.len() != m.len() || p.data.len() != v.len() {
            return Err(Error::Shape(format!("tensor {} has {} values, gradient {}", p.name, p.data.len(), g.data.len())));
        }
    }
    state.t += 1;
    for ((p, g), (m, v)) in tensors.into_iter().zip(&grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let l2 = if p.decay { cfg.l2 } else { 0.0 };
        adam_update(p.data, g.data, m, v, state.t, lr, l2, cfg);
    }
    Ok(())
}

/// Indices of the sequences in one mini-batch and the padded length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub members: Vec<usize>,
    pub max_len: usize,
}

impl Batch {
    /// Mask of member `k`: `true` for real steps, `false` for padding.
    pub fn mask(&self, data: &[FeatureSequence], k: usize) -> Vec<bool> {
        let n = data[self.members[k]].len();
        (0..self.max_len).map(|t| t < n).collect()
    }
}

/// Splits the dataset into consecutive batches, shuffled when `rng` is given.
pub fn make_batches(data: &[FeatureSequence], batch_size: usize, rng: Option<&mut Rng>) -> Result<Vec<Batch>> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if batch_size == 0 {
        return Err(Error::Validation("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    if let Some(rng) = rng {
        order.shuffle(rng);
    }
    Ok(order
        .chunks(batch_size)
        .map(|c| Batch {
            members: c.to_vec(),
            max_len: c.iter().map(|&i| data[i].len()).max().unwrap_or(0),
        })
        .collect())
}

/// `seq` padded with `zero` steps to `len`, with its mask.
pub fn pad_steps<'a>(seq: &'a FeatureSequence, len: usize, zero: &'a [f64]) -> (Vec<&'a [f64]>, Vec<bool>) {
    let mut steps = seq.steps();
    let mut mask = vec![true; steps.len()];
    steps.resize(len.max(steps.len()), zero);
    mask.resize(steps.len(), false);
    (steps, mask)
}

/// Gradient of the mean Huber loss over one batch, and the summed loss.
/// Each member's dropout masks come from its own generator seeded by
/// `(dropout_seed, member index)`, and per-member gradients are summed in
/// batch order, so the result does not depend on scheduling.
pub fn batch_gradient<R: Regressor>(
    model: &R,
    data: &[FeatureSequence],
    targets: &[f64],
    batch: &Batch,
    delta: f64,
    dropout_seed: u64,
    exec: Exec,
) -> Result<(R, f64)> {
    let zero = vec![0.0; model.input_dim()];
    let scale = 1.0 / batch.members.len() as f64;
    let per_member = |_: usize, &i: &usize| -> Result<(R, f64)> {
        let (steps, mask) = pad_steps(&data[i], batch.max_len, &zero);
        let mut rng = rng_from_seed(derive_seed(dropout_seed, &[i as u64]));
        let (y, trace) = model.forward(&steps, Some(&mask), Mode::Train(&mut rng))?;
        let (loss, d) = huber(y, targets[i], delta);
        Ok((model.backward(trace.as_ref(), d * scale)?, loss))
    };
    exec.map_fold(
        &batch.members,
        batch.members.len(),
        Ok((model.zeros_like(), 0.0)),
        per_member,
        |acc: Result<(R, f64)>, item| {
            let (mut g, l) = acc?;
            let (gi, li) = item?;
            g.add_scaled(1.0, &gi);
            Ok((g, l + li))
        },
    )
}

/// One epoch of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training-mode Huber loss over all sequences of the epoch.
    pub train_loss: f64,
    pub validation: Option<Metrics>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Writes `epoch,lr,train_loss,val_scc,val_pcc,val_rmse`; missing or
    /// degenerate values are left empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let cell = |v: Option<std::result::Result<f64, Degenerate>>| match v {
            Some(Ok(x)) => x.to_string(),
            _ => String::new(),
        };
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "lr", "train_loss", "val_scc", "val_pcc", "val_rmse"])?;
        for r in &self.epochs {
            let val = r.validation.as_ref();
            w.write_record([
                r.epoch.to_string(),
                r.lr.to_string(),
                r.train_loss.to_string(),
                cell(val.map(|m| m.scc)),
                cell(val.map(|m| m.pcc)),
                cell(val.map(|m| Ok(m.rmse))),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn check_dataset(dim: usize, data: &[FeatureSequence], targets: &[f64]) -> Result<()> {
    if data.len() != targets.len() {
        return Err(Error::Shape(format!("{} sequences for {} targets", data.len(), targets.len())));
    }
    for s in data {
        if s.dim != dim || s.vectors.iter().any(|v| v.values.len() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                found: s.dim,
                image_id: s.image_id.clone(),
            });
        }
        if s.is_empty() {
            return Err(Error::EmptySequence);
        }
    }
    if let Some(t) = targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Validation(format!("training target {t} is outside [0, 1]")));
    }
    Ok(())
}

/// Trains `model` on `data` with targets on the 0–1 scale.
///
/// The input mean is fitted on `data` first and then frozen. Every epoch
/// reshuffles the batches, and validation, when given, is only recorded.
pub fn train<R: Regressor>(
    mut model: R,
    data: &[FeatureSequence],
    targets: &[f64],
    cfg: &TrainConfig,
    validation: Option<(&[FeatureSequence], &[f64])>,
    exec: Exec,
) -> Result<(R, TrainHistory)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    check_dataset(model.input_dim(), data, targets)?;
    model.set_mean(R::fit_mean(data)?)?;
    let mut state = AdamState::new(&model);
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        let mut shuffle_rng = rng_from_seed(derive_seed(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let batches = make_batches(data, cfg.batch_size, cfg.shuffle.then_some(&mut shuffle_rng))?;
        let dropout_seed = derive_seed(cfg.seed, &[DROPOUT_STREAM, epoch as u64]);
        let mut loss_sum = 0.0;
        for batch in &batches {
            let (grad, loss) = batch_gradient(&model, data, targets, batch, cfg.huber_delta, dropout_seed, exec)?;
            adam_step(&mut model, &grad, &mut state, lr, cfg)?;
            loss_sum += loss;
        }
        let train_loss = loss_sum / data.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Validation(format!("training diverged in epoch {epoch}")));
        }
        let validation = match validation {
            Some((seqs, t)) => {
                let pred = exec.map(seqs, |_, s| model.predict(s)).into_iter().collect::<Result<Vec<_>>>()?;
                Some(Metrics::compute(&pred, t)?)
            }
            None => None,
        };
        log::info!("epoch {epoch}: lr {lr:e}, train loss {train_loss:.6}");
        history.epochs.push(EpochRecord { epoch, lr, train_loss, validation });
    }
    Ok((model, history))
}
