//! Mini-batch Adam training shared by the action and length models.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::TrainingExample;
use crate::error::{Error, Result};
use crate::model::{ActionModel, LengthModel};
use crate::nn::{clip_global_norm, Adam, AdamConfig, ModelRng, Parameterized};
use crate::rng::substream;
use crate::segment::LengthStats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub hidden_size: usize,
    pub seed: u64,
    /// Global gradient-norm clip; off when `None`.
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

impl TrainConfig {
    pub fn action_defaults() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            dropout: 0.5,
            hidden_size: 128,
            seed: 0,
            grad_clip: None,
        }
    }

    pub fn length_defaults() -> Self {
        Self {
            epochs: 30,
            ..Self::action_defaults()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.hidden_size == 0 {
            return Err(Error::Config("batch size and hidden size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training-mode (dropout active) loss over the epoch's batches.
    pub loss: f64,
}

pub trait Trainable: Parameterized + Sized {
    const TAG: &'static str;

    fn init(vocab_size: usize, hidden_size: usize, rng: &mut ModelRng) -> Self;

    fn batch_gradients(
        &self,
        batch: &[&TrainingExample],
        stats: &LengthStats,
        dropout: f64,
        rng: &mut ModelRng,
    ) -> (f64, Self);
}

impl Trainable for ActionModel {
    const TAG: &'static str = "action";

    fn init(vocab_size: usize, hidden_size: usize, rng: &mut ModelRng) -> Self {
        ActionModel::new(vocab_size, hidden_size, rng)
    }

    fn batch_gradients(
        &self,
        batch: &[&TrainingExample],
        stats: &LengthStats,
        dropout: f64,
        rng: &mut ModelRng,
    ) -> (f64, Self) {
        self.loss_and_gradients(batch, stats, dropout, Some(rng))
    }
}

impl Trainable for LengthModel {
    const TAG: &'static str = "length";

    fn init(vocab_size: usize, hidden_size: usize, rng: &mut ModelRng) -> Self {
        LengthModel::new(vocab_size, hidden_size, rng)
    }

    fn batch_gradients(
        &self,
        batch: &[&TrainingExample],
        stats: &LengthStats,
        dropout: f64,
        rng: &mut ModelRng,
    ) -> (f64, Self) {
        self.loss_and_gradients(batch, stats, dropout, Some(rng))
    }
}

/// Trains a freshly initialized model. Runs are deterministic in
/// `config.seed`; `on_epoch` sees each record as soon as it is produced.
pub fn train_model<M: Trainable>(
    examples: &[TrainingExample],
    stats: &LengthStats,
    vocab_size: usize,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(M, Vec<EpochRecord>)> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Data("no training examples".into()));
    }
    let mut rng = substream(config.seed, M::TAG, 0);
    let mut model = M::init(vocab_size, config.hidden_size, &mut rng);
    let mut adam = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    });
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let (loss, mut grads) = model.batch_gradients(&batch, stats, config.dropout, &mut rng);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "{} model loss became {loss} in epoch {epoch}",
                    M::TAG
                )));
            }
            if let Some(max_norm) = config.grad_clip {
                clip_global_norm(grads.parameters_mut(), max_norm);
            }
            let grad_refs: Vec<_> = grads.parameters().into_iter().map(|(_, g)| g).collect();
            adam.update(model.parameters_mut(), grad_refs);
            total += loss * batch.len() as f64;
        }
        let record = EpochRecord {
            epoch,
            loss: total / examples.len() as f64,
        };
        on_epoch(&record);
        log.push(record);
    }
    Ok((model, log))
}

pub fn train_action_model(
    examples: &[TrainingExample],
    stats: &LengthStats,
    vocab_size: usize,
    config: &TrainConfig,
) -> Result<(ActionModel, Vec<EpochRecord>)> {
    train_model(examples, stats, vocab_size, config, |_| {})
}

pub fn train_length_model(
    examples: &[TrainingExample],
    stats: &LengthStats,
    vocab_size: usize,
    config: &TrainConfig,
) -> Result<(LengthModel, Vec<EpochRecord>)> {
    train_model(examples, stats, vocab_size, config, |_| {})
}
