//! Mean-squared-error training with ADAM, mini-batching and patience-based
//! early stopping.

use log::{debug, info};
use rand::seq::SliceRandom;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::WindowBatch;
use crate::error::{Error, Result};
use crate::nn::{Graph, Mode, Network, ParamStore};
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;

/// Windows per inference chunk.
const EVAL_CHUNK: usize = 512;

/// Mean of `(pred − target)²`.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::Usage(format!(
            "mse needs equal non-empty inputs, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / pred.len() as f64)
}

/// MSE and its gradient `2(pred − target)/n` with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let loss = mse(pred, target)?;
    let n = pred.len() as f64;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// ADAM moments aligned with the entries of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First and second moments of entry `slot`, if it has been updated.
    pub fn moments(&self, slot: usize) -> Option<(&[f64], &[f64])> {
        self.moments
            .get(slot)
            .filter(|m| !m.m.is_empty())
            .map(|m| (m.m.as_slice(), m.v.as_slice()))
    }
}

fn adam_update(value: &mut [f64], grad: &[f64], mo: &mut Moments, c: &AdamConfig, t: u64) {
    let bc1 = 1.0 - c.beta1.powi(t as i32);
    let bc2 = 1.0 - c.beta2.powi(t as i32);
    let kernel = |((w, g), (m, v)): ((&mut f64, &f64), (&mut f64, &mut f64))| {
        *m = c.beta1 * *m + (1.0 - c.beta1) * g;
        *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
    };
    #[cfg(feature = "parallel")]
    {
        value
            .par_iter_mut()
            .zip(grad.par_iter())
            .zip(mo.m.par_iter_mut().zip(mo.v.par_iter_mut()))
            .with_min_len(1 << 14)
            .for_each(kernel);
    }
    #[cfg(not(feature = "parallel"))]
    {
        value
            .iter_mut()
            .zip(grad.iter())
            .zip(mo.m.iter_mut().zip(mo.v.iter_mut()))
            .for_each(kernel);
    }
}

/// One bias-corrected ADAM update of every trainable entry. Frozen entries
/// keep their values and moments untouched.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) {
    state.step += 1;
    if state.moments.len() < params.len() {
        state.moments.resize_with(params.len(), Moments::default);
    }
    let t = state.step;
    let config = state.config;
    for (p, mo) in params.iter_mut().zip(state.moments.iter_mut()) {
        if !p.trainable {
            continue;
        }
        if mo.m.len() != p.value.len() {
            mo.m = vec![0.0; p.value.len()];
            mo.v = vec![0.0; p.value.len()];
        }
        adam_update(p.value.data_mut(), &p.grad, mo, &config, t);
    }
}

/// Outcome of feeding one validation loss to [`EarlyStop`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Keeps the epoch whose validation loss is lower than those of the
/// following `patience` epochs.
#[derive(Clone, Debug)]
pub struct EarlyStop<S> {
    pub patience: usize,
    best: Option<(usize, f64, S)>,
    since_best: usize,
}

impl<S> EarlyStop<S> {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records the loss of `epoch`; `snapshot` is only called on improvement.
    pub fn observe(&mut self, epoch: usize, loss: f64, snapshot: impl FnOnce() -> S) -> StopDecision {
        let improved = match &self.best {
            None => true,
            Some((_, best, _)) => loss < *best,
        };
        if improved {
            self.best = Some((epoch, loss, snapshot()));
            self.since_best = 0;
            return StopDecision::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.as_ref().map(|b| b.0)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.1)
    }

    pub fn epochs_since_best(&self) -> usize {
        self.since_best
    }

    pub fn into_best(self) -> Option<(usize, f64, S)> {
        self.best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Caps the windows drawn per epoch after shuffling; `None` uses all.
    pub windows_per_epoch: Option<usize>,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1024,
            max_epochs: 100,
            patience: 6,
            windows_per_epoch: None,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_val_loss: f64,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub optimizer_steps: u64,
}

/// Epoch order of window indices: a pure function of seed, epoch and size.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, Stream::Shuffle(epoch as u64)));
    idx
}

fn gather(batch: &WindowBatch, rows: &[usize]) -> (Tensor, Vec<f64>) {
    let w = batch.width;
    let mut x = Vec::with_capacity(rows.len() * w);
    let mut y = Vec::with_capacity(rows.len());
    for &r in rows {
        x.extend_from_slice(batch.input(r));
        y.push(batch.targets[r]);
    }
    (Tensor::new(vec![rows.len(), w], x).expect("window rows"), y)
}

/// Inference over a flat `[n, width]` window matrix, chunked and evaluated in
/// parallel when enabled. Output order matches input order.
pub fn predict_windows(net: &Network, inputs: &[f64], width: usize) -> Result<Vec<f64>> {
    if width == 0 || !inputs.len().is_multiple_of(width) {
        return Err(Error::Usage("window matrix has ragged rows".into()));
    }
    let run = |chunk: &[f64]| -> Result<Vec<f64>> {
        let x = Tensor::new(vec![chunk.len() / width, width], chunk.to_vec())?;
        Ok(net.infer(&x)?.into_data())
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<Vec<f64>>> = inputs.par_chunks(EVAL_CHUNK * width).map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<Vec<f64>>> = inputs.chunks(EVAL_CHUNK * width).map(run).collect();
    let mut out = Vec::with_capacity(inputs.len() / width);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Mean squared error of the network over a window set, in inference mode.
pub fn evaluate_loss(net: &Network, windows: &WindowBatch) -> Result<f64> {
    let preds = predict_windows(net, &windows.inputs, windows.width)?;
    mse(&preds, &windows.targets)
}

fn check_dims(net: &Network, batch: &WindowBatch, what: &str) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset(format!("{what} set has no windows")));
    }
    let per: usize = net.input_shape().iter().product();
    if per != batch.width || net.output_shape() != [1] {
        return Err(Error::Usage(format!(
            "{what} windows of width {} do not fit a network taking {:?} and producing {:?}",
            batch.width,
            net.input_shape(),
            net.output_shape()
        )));
    }
    Ok(())
}

/// Trains `net` in place and restores the parameters of the best
/// validation epoch.
///
/// Each epoch shuffles the training windows, runs full batches followed by a
/// final partial batch (one ADAM step each), then scores the validation set
/// with dropout off. Training ends once `patience` consecutive epochs fail to
/// beat the best loss, or after `max_epochs`.
pub fn train_epochs(
    net: &mut Network,
    train: &WindowBatch,
    val: &WindowBatch,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    if config.max_epochs == 0 {
        return Err(Error::Config("max_epochs must be >= 1".into()));
    }
    check_dims(net, train, "training")?;
    check_dims(net, val, "validation")?;

    let initial_val_loss = evaluate_loss(net, val)?;
    let mut adam = AdamState::new(config.adam);
    let mut dropout_rng = stream(config.seed, Stream::Dropout);
    let mut early = EarlyStop::new(config.patience.max(1));
    let mut history = Vec::new();
    let mut graph = Graph::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let mut order = epoch_order(config.seed, epoch, train.len());
        if let Some(cap) = config.windows_per_epoch {
            order.truncate(cap.max(1));
        }
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = gather(train, rows);
            net.params.zero_grad();
            let pred = net.forward(&x, &mut graph, Mode::Train(&mut dropout_rng))?;
            let (loss, grad) = mse_loss(pred.data(), &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b + 1 });
            }
            net.backward(&mut graph, &Tensor::new(pred.shape().to_vec(), grad)?)?;
            adam_step(&mut net.params, &mut adam);
            loss_sum += loss * rows.len() as f64;
            steps += 1;
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_loss = evaluate_loss(net, val)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6} ({steps} steps)");
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            steps,
        });
        if early.observe(epoch, val_loss, || net.params.snapshot()) == StopDecision::Stop {
            stopped_early = true;
            break;
        }
    }

    let (best_epoch, best_val_loss, snapshot) = early.into_best().expect("at least one epoch ran");
    net.params.restore(&snapshot)?;
    info!(
        "training finished after {} epochs; best epoch {best_epoch} (val {best_val_loss:.6})",
        history.len()
    );
    Ok(TrainReport {
        initial_val_loss,
        history,
        best_epoch,
        best_val_loss,
        stopped_early,
        optimizer_steps: adam.step_count(),
    })
}
