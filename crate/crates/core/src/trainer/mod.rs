//! Adam training over a fixed batch schedule with early stopping on
//! validation perplexity.

mod checkpoint;

use std::time::Instant;

pub use checkpoint::{load_checkpoint, save_checkpoint, HistoryEntry, ModelCheckpoint, FORMAT_VERSION, MAGIC};

use crate::corpus::{EncodedPair, VocabPair};
use crate::error::{Error, Result};
use crate::metrics::corpus_cross_entropy;
use crate::ordering::OrderingPlan;
use crate::seq2seq::{backward_gradients, Batch, Parameters};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 128,
            max_epochs: 40,
            patience: 5,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if self.patience < 1 {
            return fail("patience must be at least 1");
        }
        if !(self.clip_norm > 0.0) {
            return fail("clip_norm must be positive");
        }
        if self.batch_size < 1 || self.max_epochs < 1 {
            return fail("batch_size and max_epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return fail("Adam betas must be in [0, 1) and epsilon positive");
        }
        Ok(())
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        AdamState {
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update after clipping the gradient to a global
/// L2 norm of `clip_norm`. Returns the norm of the gradient actually applied.
pub fn adam_step(params: &mut Parameters, grads: &Parameters, state: &mut AdamState, config: &TrainConfig) -> Result<f64> {
    if !params.same_shape(grads) || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape("parameters, gradients and Adam state differ in shape".into()));
    }
    let norm = grads.l2_norm();
    let scale = if norm > config.clip_norm { config.clip_norm / norm } else { 1.0 };
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for (((p, &g), m), v) in params.data.iter_mut().zip(&grads.data).zip(&mut state.m).zip(&mut state.v) {
        let g = g * scale;
        *m = config.beta1 * *m + (1.0 - config.beta1) * g;
        *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
    Ok(norm.min(config.clip_norm))
}

/// Seed for the dropout masks of one batch.
pub fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    let mut z = seed ^ ((epoch as u64) << 32 | batch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean of the batch losses, bits per token.
    pub train_loss: f64,
    pub val_perplexity: f64,
    pub seconds: f64,
}

/// Looks pairs up by corpus index; `pairs` must be sorted by index.
pub fn lookup(pairs: &[EncodedPair], index: usize) -> Result<&EncodedPair> {
    pairs
        .binary_search_by_key(&index, |p| p.index)
        .map(|i| &pairs[i])
        .map_err(|_| Error::Precondition(format!("scheduled index {index} is not in the training corpus")))
}

/// One Adam step per batch, in schedule order. `epoch` is 1-based and only
/// feeds the dropout seeds. Returns the mean batch loss.
pub fn train_epoch(
    params: &mut Parameters,
    adam: &mut AdamState,
    batches: &[Vec<usize>],
    pairs: &[EncodedPair],
    config: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for (b, indices) in batches.iter().enumerate() {
        let members = indices.iter().map(|&i| lookup(pairs, i)).collect::<Result<Vec<_>>>()?;
        let batch = Batch::from_pairs(members);
        let seed = batch_seed(config.seed, epoch, b);
        let (out, grads) = backward_gradients(params, &batch, Some(seed)).map_err(|e| Error::BatchFailed {
            batch: b,
            source: Box::new(e),
        })?;
        adam_step(params, &grads, adam, config)?;
        params.check_finite().map_err(|e| Error::BatchFailed {
            batch: b,
            source: Box::new(e),
        })?;
        total += out.mean_loss;
    }
    Ok(if batches.is_empty() { 0.0 } else { total / batches.len() as f64 })
}

/// Tracks the best validation perplexity and decides when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    epochs_seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            epochs_seen: 0,
        }
    }

    /// Records the next epoch's perplexity; returns true if it is a new best.
    pub fn observe(&mut self, ppl: f64) -> bool {
        self.epochs_seen += 1;
        let improved = self.best.is_none_or(|(_, b)| ppl < b);
        if improved {
            self.best = Some((self.epochs_seen, ppl));
        }
        improved
    }

    pub fn should_stop(&self) -> bool {
        self.best.is_some_and(|(e, _)| self.epochs_seen - e >= self.patience)
    }

    /// `(epoch, perplexity)` of the best epoch so far, 1-based.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub best: ModelCheckpoint,
    pub history: Vec<EpochStats>,
    pub epochs_to_convergence: usize,
}

/// Trains on `plan` until validation perplexity has not improved for
/// `patience` epochs or `max_epochs` is reached, keeping the best epoch.
pub fn fit(
    init: Parameters,
    plan: &OrderingPlan,
    train: &[EncodedPair],
    validation: &[EncodedPair],
    vocabs: VocabPair,
    config: &TrainConfig,
) -> Result<FitResult> {
    config.validate()?;
    if validation.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    if plan.num_epochs() < config.max_epochs {
        return Err(Error::Config(format!(
            "plan has {} epochs, training may need {}",
            plan.num_epochs(),
            config.max_epochs
        )));
    }
    let schedule = crate::ordering::schedule_batches(plan, config.batch_size)?;
    let mut params = init;
    let mut adam = AdamState::new(&params);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    let mut best_params = params.clone();

    for e in 0..config.max_epochs {
        let start = Instant::now();
        let epoch = e + 1;
        let train_loss = train_epoch(&mut params, &mut adam, schedule.epoch(e), train, config, epoch)?;
        let val_perplexity = corpus_cross_entropy(&params, validation)?.exp2();
        if !val_perplexity.is_finite() {
            return Err(Error::NumericalInstability {
                tensor: "validation perplexity".into(),
            });
        }
        if stopper.observe(val_perplexity) {
            best_params = params.clone();
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_perplexity,
            seconds: start.elapsed().as_secs_f64(),
        });
        if stopper.should_stop() {
            break;
        }
    }
    let (best_epoch, _) = stopper.best().expect("at least one epoch ran");
    let mut best = ModelCheckpoint::new(best_params, vocabs);
    best.history = history
        .iter()
        .map(|s| HistoryEntry {
            epoch: s.epoch as u32,
            train_loss: s.train_loss,
            val_perplexity: s.val_perplexity,
        })
        .collect();
    Ok(FitResult {
        best,
        history,
        epochs_to_convergence: best_epoch,
    })
}
