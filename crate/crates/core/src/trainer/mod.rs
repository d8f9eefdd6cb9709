//! Momentum-SGD fine-tuning over a selected parameter group, with optional
//! EWC regularization, per-epoch evaluation and early stopping.

mod cache;

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cache::{CacheEntry, CacheSnapshot, TrainingCache};

use crate::decode::greedy_transcript;
use crate::error::{Error, Result};
use crate::ewc::{ewc_penalty, AnchorParameters, FisherEstimate};
use crate::grad::{ParamStore, Tape, Tensor};
use crate::loss::{batch_loss_gradients, LossInput};
use crate::metrics::{evaluate, EvaluationReport};
use crate::model::{ParamGroup, TransducerModel};
use crate::text;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub trainable_group: ParamGroup,
    /// EWC penalty weight; 0 disables the penalty.
    pub lambda: f64,
    /// Stop after this many epochs without a user-test WER improvement.
    pub patience: Option<usize>,
    pub seed: u64,
    /// Rescale the batch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
    /// Reshuffle examples every epoch (personalization keeps cache order).
    pub shuffle: bool,
    /// `(epoch, factor)`: from `epoch` on, the rate is `learning_rate · factor`.
    pub lr_steps: Vec<(usize, f64)>,
}

impl Default for TrainConfig {
    /// Desk-scale personalization settings.
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            momentum: 0.9,
            batch_size: 5,
            epochs: 15,
            trainable_group: ParamGroup::All,
            lambda: 0.0,
            patience: Some(5),
            seed: 0,
            clip_norm: Some(5.0),
            shuffle: false,
            lr_steps: Vec::new(),
        }
    }
}

impl TrainConfig {
    /// The production recipe's constants, kept for reference runs.
    pub fn production_recipe() -> Self {
        Self { learning_rate: 1e-4, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.lr_steps.iter().any(|&(_, f)| !(f > 0.0) || !f.is_finite()) {
            return Err(Error::InvalidArgument("learning-rate factors must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (1-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let factor = self.lr_steps.iter().filter(|&&(e, _)| e <= epoch).max_by_key(|&&(e, _)| e).map_or(1.0, |&(_, f)| f);
        self.learning_rate * factor
    }
}

/// Heavy-ball momentum state for the trainable slots.
#[derive(Clone, Debug)]
pub struct Momentum {
    slots: Vec<usize>,
    velocity: Vec<Tensor>,
}

impl Momentum {
    /// Zero velocity for `slots` of `params`.
    pub fn new(params: &ParamStore, slots: Vec<usize>) -> Self {
        let velocity = slots.iter().map(|&s| Tensor::zeros(params.get(s).value.shape())).collect();
        Self { slots, velocity }
    }

    pub fn velocity(&self, k: usize) -> &Tensor {
        &self.velocity[k]
    }

    /// `v ← μ·v + g; θ ← θ − lr·v` on the tracked slots, using the
    /// gradients accumulated in `params`.
    pub fn step(&mut self, params: &mut ParamStore, lr: f64, mu: f64) {
        for (v, &slot) in self.velocity.iter_mut().zip(&self.slots) {
            let p = params.get_mut(slot);
            momentum_step(p.value.values_mut(), p.grad.values(), v.values_mut(), lr, mu);
        }
    }
}

/// One heavy-ball update of a flat parameter slice.
pub fn momentum_step(theta: &mut [f64], grad: &[f64], velocity: &mut [f64], lr: f64, mu: f64) {
    for ((t, g), v) in theta.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = mu * *v + g;
        *t -= lr * *v;
    }
}

/// Optional EWC regularizer for a training session.
#[derive(Clone, Copy, Debug)]
pub struct EwcTerm<'a> {
    pub anchors: &'a AnchorParameters,
    pub fisher: &'a FisherEstimate,
}

/// A rendered evaluation set with reference words.
#[derive(Clone, Debug, Default)]
pub struct EvalSet {
    pub features: Vec<Tensor>,
    pub references: Vec<Vec<String>>,
}

impl EvalSet {
    pub fn push(&mut self, features: Tensor, transcript: &str) {
        self.features.push(features);
        self.references.push(text::words(transcript));
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Greedy hypotheses of `model` on every utterance.
    pub fn hypotheses(&self, model: &TransducerModel) -> Result<Vec<Vec<String>>> {
        self.features.iter().map(|f| Ok(text::words(&greedy_transcript(model, f)?))).collect()
    }

    pub fn evaluate(&self, model: &TransducerModel, keywords: &BTreeSet<String>) -> Result<EvaluationReport> {
        evaluate(&self.references, &self.hypotheses(model)?, keywords)
    }
}

/// What personalization is scored on after every epoch.
#[derive(Clone, Debug, Default)]
pub struct EvalSuite {
    pub user_test: EvalSet,
    pub base_test: Option<EvalSet>,
    pub keywords: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub user: EvaluationReport,
    pub base: Option<EvaluationReport>,
}

impl EvalSuite {
    fn run(&self, model: &TransducerModel) -> Result<EvalPoint> {
        Ok(EvalPoint {
            user: self.user_test.evaluate(model, &self.keywords)?,
            base: self.base_test.as_ref().map(|b| b.evaluate(model, &BTreeSet::new())).transpose()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
    pub eval: EvalPoint,
}

/// Wall-clock measurements, kept apart from the deterministic results.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub epoch_seconds: Vec<f64>,
    pub peak_rss_bytes: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub trainable_parameters: usize,
    pub examples: usize,
    pub initial: EvalPoint,
    pub epochs: Vec<EpochReport>,
    /// Epoch whose parameters were returned (0 means unchanged).
    pub returned_epoch: usize,
    pub stopped_early: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing: Option<Timing>,
}

impl TrainReport {
    /// The metrics of the returned parameters.
    pub fn returned(&self) -> &EvalPoint {
        match self.returned_epoch {
            0 => &self.initial,
            e => &self.epochs[e - 1].eval,
        }
    }

    /// Copy without wall-clock data, for byte-stable reports.
    pub fn without_timing(&self) -> Self {
        Self { timing: None, ..self.clone() }
    }
}

/// Peak resident set size of this process, where the platform exposes it.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Runs one pass over `order`, updating `model` in place. Returns the mean
/// per-batch training objective.
fn run_epoch(
    model: &mut TransducerModel,
    examples: &[LossInput<'_>],
    order: &[usize],
    config: &TrainConfig,
    ewc: Option<EwcTerm<'_>>,
    optimizer: &mut Momentum,
    epoch: usize,
) -> Result<f64> {
    let group = config.trainable_group;
    let mut total = 0.0;
    let mut batches = 0;
    for (step, chunk) in order.chunks(config.batch_size).enumerate() {
        let batch: Vec<LossInput<'_>> = chunk.iter().map(|&i| examples[i]).collect();
        let diverged = |loss: f64| Error::Diverged { epoch, step, loss };
        let nan = |e: Error| match e {
            Error::NonFinite { .. } => diverged(f64::NAN),
            e => e,
        };
        let loss = batch_loss_gradients(model, group, &batch).map_err(nan)?;
        let mut value = loss.mean;
        let penalty = match (ewc, config.lambda > 0.0) {
            (Some(term), true) => {
                let mut tape = Tape::new();
                let bindings = model.bind(&mut tape, group);
                let pen = ewc_penalty(&mut tape, &bindings, model, term.anchors, term.fisher, config.lambda).map_err(nan)?;
                value += tape.value(pen).item();
                Some((tape.backward(pen).map_err(nan)?, bindings))
            }
            _ => None,
        };
        if !value.is_finite() {
            return Err(diverged(value));
        }
        let params = model.params_mut();
        params.zero_grad();
        loss.accumulate_into(params)?;
        if let Some((grads, bindings)) = &penalty {
            params.accumulate(grads, bindings)?;
        }
        if let Some(max_norm) = config.clip_norm {
            let norm = params.iter().map(|p| p.grad.values().iter().map(|g| g * g).sum::<f64>()).sum::<f64>().sqrt();
            if norm > max_norm {
                let s = max_norm / norm;
                params.iter_mut().for_each(|p| p.grad.values_mut().iter_mut().for_each(|g| *g *= s));
            }
        }
        optimizer.step(params, config.learning_rate_at(epoch), config.momentum);
        total += value;
        batches += 1;
    }
    Ok(total / batches as f64)
}

fn loss_inputs(snapshot: &CacheSnapshot) -> Vec<LossInput<'_>> {
    snapshot.entries().iter().map(|e| LossInput { features: &e.features, targets: &e.labels }).collect()
}

/// Fine-tunes a copy of `model` on `cache`, updating only the configured
/// group. Evaluates after every epoch; with early stopping the best epoch
/// by user-test WER is returned, otherwise the last.
pub fn personalize(
    model: &TransducerModel,
    cache: &CacheSnapshot,
    suite: &EvalSuite,
    config: &TrainConfig,
    ewc: Option<EwcTerm<'_>>,
) -> Result<(TransducerModel, TrainReport)> {
    config.validate()?;
    if cache.is_empty() {
        return Err(Error::Empty("training cache"));
    }
    if (config.lambda > 0.0) != ewc.is_some() {
        return Err(Error::InvalidArgument("EWC anchors and Fisher are required exactly when lambda > 0".into()));
    }
    let examples = loss_inputs(cache);
    let mut current = model.clone();
    let mut optimizer = Momentum::new(current.params(), current.group_slots(config.trainable_group));
    let initial = suite.run(&current)?;
    let mut best = (initial.user.wer, 0usize, current.clone());
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut timing = Timing::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut stopped_early = false;
    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let start = Instant::now();
        let mean_loss = run_epoch(&mut current, &examples, &order, config, ewc, &mut optimizer, epoch)?;
        timing.epoch_seconds.push(start.elapsed().as_secs_f64());
        let eval = suite.run(&current)?;
        if eval.user.wer < best.0 {
            best = (eval.user.wer, epoch, current.clone());
            best.2.params_mut().zero_grad();
        }
        epochs.push(EpochReport { epoch, mean_loss, eval });
        if let Some(patience) = config.patience {
            if epoch - best.1 >= patience && epoch < config.epochs {
                stopped_early = true;
                break;
            }
        }
    }
    timing.peak_rss_bytes = peak_rss_bytes();
    let (returned_epoch, mut returned) = if stopped_early { (best.1, best.2) } else { (epochs.len(), current) };
    returned.params_mut().zero_grad();
    let report = TrainReport {
        config: config.clone(),
        trainable_parameters: model.group_size(config.trainable_group),
        examples: examples.len(),
        initial,
        epochs,
        returned_epoch,
        stopped_early,
        timing: Some(timing),
    };
    Ok((returned, report))
}

/// Plain supervised training without evaluation, used for the base model
/// and for throughput measurement. Returns per-epoch mean losses and
/// wall-clock seconds.
pub fn train_epochs(
    model: &mut TransducerModel,
    examples: &[LossInput<'_>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64, &TransducerModel) -> bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut optimizer = Momentum::new(model.params(), model.group_slots(config.trainable_group));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let (mut losses, mut seconds) = (Vec::new(), Vec::new());
    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let start = Instant::now();
        let loss = run_epoch(model, examples, &order, config, None, &mut optimizer, epoch)?;
        seconds.push(start.elapsed().as_secs_f64());
        losses.push(loss);
        if !on_epoch(epoch, loss, model) {
            break;
        }
    }
    model.params_mut().zero_grad();
    Ok((losses, seconds))
}

/// Like [`train_epochs`], but `sample(epoch)` supplies a fresh training
/// set (features, targets) for every epoch.
pub fn train_resampled(
    model: &mut TransducerModel,
    config: &TrainConfig,
    mut sample: impl FnMut(usize) -> Result<Vec<(Tensor, Vec<usize>)>>,
    mut on_epoch: impl FnMut(usize, f64, &TransducerModel) -> bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    config.validate()?;
    let mut optimizer = Momentum::new(model.params(), model.group_slots(config.trainable_group));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut losses, mut seconds) = (Vec::new(), Vec::new());
    for epoch in 1..=config.epochs {
        let data = sample(epoch)?;
        if data.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let examples: Vec<LossInput<'_>> = data.iter().map(|(f, t)| LossInput { features: f, targets: t }).collect();
        let mut order: Vec<usize> = (0..examples.len()).collect();
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let start = Instant::now();
        let loss = run_epoch(model, &examples, &order, config, None, &mut optimizer, epoch)?;
        seconds.push(start.elapsed().as_secs_f64());
        losses.push(loss);
        if !on_epoch(epoch, loss, model) {
            break;
        }
    }
    model.params_mut().zero_grad();
    Ok((losses, seconds))
}

#[cfg(test)]
mod tests;
