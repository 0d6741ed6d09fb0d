//! Seeded mini-batch training with BCE and AdamW.

pub mod adamw;
pub mod loss;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adamw::{AdamW, AdamWConfig};
pub use loss::{bce_loss, bce_with_logits};

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::eval::{Confusion, Metrics};
use crate::models::{Model, ModelSpec};
use crate::tensor::Tensor;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub prob_clamp: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            epochs: 30,
            batch_size: 256,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            prob_clamp: 1e-7,
        }
    }
}

impl TrainConfig {
    /// `learning_rate = 0` is accepted so an untrained baseline can be run
    /// through the same loop.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigParse(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            return bad("prob_clamp must lie in (0, 0.5)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        // written so that NaN fails both checks
        if self.eps.is_nan()
            || self.eps <= 0.0
            || self.weight_decay.is_nan()
            || self.weight_decay < 0.0
        {
            return bad("eps must be > 0 and weight_decay >= 0");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Sample order for one epoch; a pure function of `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Optimizer state plus epoch counter for one model.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    opt: AdamW,
    epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            opt: AdamW::new(config.adamw()),
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One pass over shuffled mini-batches (last partial batch kept).
    /// Returns the sample-weighted mean training loss.
    pub fn run_epoch(&mut self, model: &mut Model, x: &Tensor, y: &[u8]) -> Result<f64> {
        if x.rows() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.rows(),
                right: y.len(),
            });
        }
        if y.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(&v) = x.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(v));
        }
        let epoch = self.epoch;
        let diverged = |reason: String| Error::Divergence { epoch, reason };
        let order = epoch_order(self.config.seed, epoch, y.len());
        let mut total = 0.0;
        for idx in order.chunks(self.config.batch_size) {
            let xb = x.select_rows(idx);
            let yb: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
            let logits = model.forward(&xb).map_err(|e| match e {
                // inputs were finite, so anything non-finite inside came from the weights
                Error::NonFiniteLogit(_) | Error::NonFiniteInput(_) => diverged(e.to_string()),
                other => other,
            })?;
            let (loss, grad) = bce_with_logits(logits.data(), &yb, self.config.prob_clamp)?;
            if !loss.is_finite() {
                return Err(diverged(format!("loss {loss}")));
            }
            total += loss * idx.len() as f64;
            model.backward(&Tensor::new(vec![idx.len(), 1], grad)?)?;
            self.opt.step(model.params_mut()).map_err(|e| match e {
                Error::NonFiniteGradient(_) => diverged(e.to_string()),
                other => other,
            })?;
        }
        self.epoch += 1;
        Ok(total / y.len() as f64)
    }
}

/// Confusion counts of `model` on `(x, y)`, evaluated in chunks of `batch` rows.
pub fn evaluate(model: &mut Model, x: &Tensor, y: &[u8], batch: usize) -> Result<Confusion> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    let mut conf = Confusion::default();
    let idx: Vec<usize> = (0..y.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let pred = model.predict(&x.select_rows(chunk), DEFAULT_THRESHOLD)?;
        conf = conf.accumulate(&pred, &y[chunk[0]..chunk[0] + chunk.len()])?;
    }
    Ok(conf)
}

/// Everything recorded about one (model, dataset) training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub dataset: String,
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub confusion: Confusion,
    pub metrics: Metrics,
    pub macro_metrics: Metrics,
    pub param_count: usize,
    /// Wall time; excluded from the byte-stable numeric outputs.
    #[serde(default)]
    pub runtime_secs: f64,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn run_id(&self) -> String {
        format!("{}@{}", self.model, self.dataset)
    }
}

/// Trains `model` on `train` for `config.epochs` epochs, then evaluates on `test`.
pub fn train_model(
    model: &mut Model,
    dataset: &str,
    train: &DatasetSplit,
    test: &DatasetSplit,
    config: &TrainConfig,
) -> Result<RunReport> {
    train_model_with(model, dataset, train, test, config, |_, _| {})
}

/// As [`train_model`], calling `on_epoch(epoch, mean_loss)` after each epoch.
pub fn train_model_with(
    model: &mut Model,
    dataset: &str,
    train: &DatasetSplit,
    test: &DatasetSplit,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<RunReport> {
    let start = Instant::now();
    let dim = model.spec().input_dim;
    for (name, split) in [("train", train), ("test", test)] {
        if split.features.row_len() != dim && split.features.rows() > 0 {
            return Err(Error::SchemaMismatch(format!(
                "{name} split has {} features, model expects {dim}",
                split.features.row_len()
            )));
        }
    }
    let mut trainer = Trainer::new(*config)?;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for e in 0..config.epochs {
        let loss = trainer.run_epoch(model, &train.features, &train.labels)?;
        on_epoch(e, loss);
        epoch_losses.push(loss);
    }
    let train_conf = evaluate(model, &train.features, &train.labels, config.batch_size)?;
    let confusion = evaluate(model, &test.features, &test.labels, config.batch_size)?;
    let mut notes = Vec::new();
    if config.learning_rate != TrainConfig::default().learning_rate {
        notes.push(format!(
            "learning_rate overridden to {}",
            config.learning_rate
        ));
    }
    Ok(RunReport {
        model: model.kind().name().to_string(),
        dataset: dataset.to_string(),
        spec: model.spec().clone(),
        config: *config,
        epoch_losses,
        train_accuracy: train_conf.metrics()?.accuracy,
        confusion,
        metrics: confusion.metrics()?,
        macro_metrics: confusion.macro_metrics()?,
        param_count: model.param_count(),
        runtime_secs: start.elapsed().as_secs_f64(),
        notes,
    })
}
