//! Mini-batch training with Adam, early stopping on validation loss, and
//! batched prediction.

use std::io::{self, Write};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{AdamConfig, AdamError, AdamState, TensorError};
use crate::corpus::Task;
use crate::metrics::MetricsError;
use crate::model::{loss_and_gradients, model_logits, ModelConfig, ModelError, ModelParams};
use crate::rng::{substream, Stream};
use crate::textprep::EncodedExample;

/// Batch size used for evaluation and prediction passes.
pub const EVAL_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("numerical failure in epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Adam(#[from] AdamError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Global gradient-norm ceiling; non-positive or infinite disables it.
    pub clip_norm: f64,
    pub early_stop_patience: usize,
    pub model: ModelConfig,
    pub min_count: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::AverageRating,
            batch_size: 32,
            epochs: 30,
            adam: AdamConfig::default(),
            seed: 0,
            clip_norm: 5.0,
            early_stop_patience: 5,
            model: ModelConfig::default(),
            min_count: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_owned()));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if !(self.adam.learning_rate > 0.0 && self.adam.learning_rate.is_finite()) {
            return fail("learning rate must be positive");
        }
        if !(0.0 < self.adam.beta1 && self.adam.beta1 < 1.0 && 0.0 < self.adam.beta2 && self.adam.beta2 < 1.0) {
            return fail("beta1 and beta2 must lie in (0, 1)");
        }
        let m = &self.model;
        if [m.dim, m.hidden, m.hidden2, m.dense, m.max_len].contains(&0) {
            return fail("model dimensions and max length must be positive");
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the per-batch losses seen during the epoch.
    pub train_loss: f64,
    /// Accuracy of the per-batch predictions seen during the epoch.
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub seconds: f64,
}

/// Writes the history as tab-separated values with a header row. Missing
/// validation figures are written as empty fields.
pub fn write_history(records: &[EpochRecord], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "epoch\ttrain_loss\ttrain_accuracy\tval_loss\tval_accuracy\tseconds")?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in records {
        writeln!(w, "{}\t{}\t{}\t{}\t{}\t{:.3}", r.epoch, r.train_loss, r.train_accuracy, opt(r.val_loss), opt(r.val_accuracy), r.seconds)?;
    }
    Ok(())
}

/// Partitions `0..len` into batches of `batch_size` (the last may be
/// shorter). With `shuffle`, indices are permuted by a generator seeded
/// from `seed` first.
pub fn make_batches(len: usize, batch_size: usize, seed: u64, shuffle: bool) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..len).collect();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Predicted class per example, in input order.
pub fn predict(params: &ModelParams, examples: &[EncodedExample]) -> Result<Vec<usize>, TrainError> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(EVAL_BATCH) {
        let refs: Vec<&EncodedExample> = chunk.iter().collect();
        out.extend(model_logits(params, &refs)?.iter().map(|l| argmax(l)));
    }
    Ok(out)
}

/// Mean cross-entropy and accuracy over `examples`.
pub fn loss_and_accuracy(params: &ModelParams, examples: &[EncodedExample]) -> Result<(f64, f64), TrainError> {
    if examples.is_empty() {
        return Err(MetricsError::Empty.into());
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in examples.chunks(EVAL_BATCH) {
        let refs: Vec<&EncodedExample> = chunk.iter().collect();
        for (logits, e) in model_logits(params, &refs)?.iter().zip(chunk) {
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
            loss += lse - logits[e.label];
            correct += usize::from(argmax(logits) == e.label);
        }
    }
    let n = examples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn clip(grads: &mut [Vec<f64>], max_norm: f64) {
    if !(max_norm > 0.0 && max_norm.is_finite()) {
        return;
    }
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
    }
}

/// Owns the parameters and optimizer state across epochs.
pub struct Trainer {
    config: TrainConfig,
    params: ModelParams,
    adam: AdamState,
    shuffle: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    /// Initializes parameters from the run seed's init substream.
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let params = ModelParams::init(config.model, &mut substream(config.seed, Stream::Init));
        Self::with_params(config, params)
    }

    pub fn with_params(config: TrainConfig, params: ModelParams) -> Result<Self, TrainError> {
        config.validate()?;
        let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        let adam = AdamState::new(config.adam, &sizes)?;
        let shuffle = substream(config.seed, Stream::Shuffle);
        Ok(Self { config, params, adam, shuffle, epoch: 0 })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// One pass over `train` in freshly shuffled batches. Returns the mean
    /// batch loss and the running accuracy.
    pub fn run_epoch(&mut self, train: &[EncodedExample]) -> Result<(f64, f64), TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyTrainingSet);
        }
        let epoch = self.epoch;
        let batches = make_batches(train.len(), self.config.batch_size, self.shuffle.gen(), true);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, batch) in batches.iter().enumerate() {
            let refs: Vec<&EncodedExample> = batch.iter().map(|&i| &train[i]).collect();
            let mut out = loss_and_gradients(&self.params, &refs).map_err(|e| match e {
                ModelError::Tensor(TensorError::NonFinite { op }) => {
                    TrainError::NonFinite { epoch, batch: b, detail: format!("{} produced a non-finite value", op) }
                }
                other => TrainError::Model(other),
            })?;
            loss_sum += out.loss;
            correct += out.logits.iter().zip(&refs).filter(|(l, e)| argmax(l) == e.label).count();
            clip(&mut out.grads, self.config.clip_norm);
            let grads: Vec<&[f64]> = out.grads.iter().map(Vec::as_slice).collect();
            let mut tensors = self.params.tensors_mut();
            self.adam.step(&mut tensors, &grads).map_err(|e| match e {
                AdamError::NonFiniteGradient { .. } => TrainError::NonFinite { epoch, batch: b, detail: e.to_string() },
                other => TrainError::Adam(other),
            })?;
        }
        self.epoch += 1;
        Ok((loss_sum / batches.len() as f64, correct as f64 / train.len() as f64))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest monitored loss.
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Trains for up to `config.epochs` epochs. The monitored quantity is the
/// validation loss, or the epoch's training loss when `validation` is
/// empty; training stops once it has failed to improve for
/// `early_stop_patience` consecutive epochs.
pub fn train(config: &TrainConfig, train: &[EncodedExample], validation: &[EncodedExample]) -> Result<TrainOutcome, TrainError> {
    train_with(config, train, validation, |_| {})
}

/// [`train`] with a callback invoked after each epoch.
pub fn train_with(
    config: &TrainConfig,
    train: &[EncodedExample],
    validation: &[EncodedExample],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut trainer = Trainer::new(config.clone())?;
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut stale = 0;
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let (train_loss, train_accuracy) = trainer.run_epoch(train)?;
        let (val_loss, val_accuracy) = if validation.is_empty() {
            (None, None)
        } else {
            let (l, a) = loss_and_accuracy(trainer.params(), validation)?;
            (Some(l), Some(a))
        };
        let record = EpochRecord { epoch, train_loss, train_accuracy, val_loss, val_accuracy, seconds: started.elapsed().as_secs_f64() };
        match (val_loss, val_accuracy) {
            (Some(vl), Some(va)) => {
                log::info!("epoch {} loss {:.4} acc {:.4} val_loss {:.4} val_acc {:.4}", epoch + 1, train_loss, train_accuracy, vl, va)
            }
            _ => log::info!("epoch {} loss {:.4} acc {:.4}", epoch + 1, train_loss, train_accuracy),
        }
        on_epoch(&record);
        history.push(record);

        let monitored = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _, _)| monitored < *b) {
            best = Some((monitored, epoch, trainer.params().clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience {
                log::info!("stopping early after epoch {}", epoch);
                break;
            }
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { params, history, best_epoch })
}
