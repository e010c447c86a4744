use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{batch_of, Model, ModelWeights, Network, TrainingMetadata};
use crate::corpus::TokenSequence;
use crate::nn::{Optimizer, OptimizerSpec, Parameter};
use crate::rng;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSpec,
    pub seed: u64,
    /// Stop after this many epochs without a validation-accuracy improvement.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, batch_size: 32, optimizer: OptimizerSpec::default(), seed: 0, early_stop_patience: 5 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// What a trained model is bound to: the vocabulary it was tokenized with and
/// the ordered class codes its outputs stand for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelContext {
    pub vocab_hash: String,
    pub class_list: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_accuracy\n");
        for e in &self.epochs {
            let acc = e.val_accuracy.map(|a| a.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, acc));
        }
        s
    }
}

/// Fraction of sequences whose argmax prediction equals the label.
pub fn accuracy_on<T: Scalar>(model: &Model<T>, data: &[TokenSequence]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let mut correct = 0usize;
    for chunk in data.chunks(256) {
        let refs: Vec<&TokenSequence> = chunk.iter().collect();
        let (ids, labels) = batch_of(&refs)?;
        let logits = model.logits(&ids)?;
        let c = logits.dim(1);
        for (row, &label) in logits.data().chunks(c).zip(&labels) {
            let arg = row
                .iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0;
            correct += usize::from(arg == label);
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn snapshot<T: Scalar>(model: &Model<T>) -> Vec<Parameter<T>> {
    model.parameters().into_iter().cloned().collect()
}

fn restore<T: Scalar>(model: &mut Model<T>, saved: Vec<Parameter<T>>) {
    for (p, s) in model.parameters_mut().into_iter().zip(saved) {
        p.value = s.value;
        p.zero_grad();
    }
}

/// Mini-batch training with early stopping; returns the best-validation
/// weights and the per-epoch history. With an empty validation set the
/// lowest-training-loss epoch is kept.
pub fn train<T: Scalar>(
    mut model: Model<T>,
    train: &[TokenSequence],
    valid: &[TokenSequence],
    cfg: &TrainConfig,
    ctx: &ModelContext,
) -> Result<(ModelWeights, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if ctx.class_list.len() != model.n_classes() {
        return Err(Error::invalid(format!(
            "model has {} outputs but the class list has {} entries",
            model.n_classes(),
            ctx.class_list.len()
        )));
    }
    let train_classes: BTreeSet<usize> = train.iter().map(|s| s.label_id).collect();
    if let Some(s) = valid.iter().find(|s| !train_classes.contains(&s.label_id)) {
        return Err(Error::invalid(format!(
            "validation record {} has class {} absent from training data",
            s.original_record_id, s.label_id
        )));
    }

    let mut optimizer = Optimizer::<T>::new(cfg.optimizer)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best_score = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_params = snapshot(&model);
    let mut stale = 0;
    let mut step: u64 = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng::seeded(rng::derive_indexed(cfg.seed, "epoch", epoch as u64)));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let refs: Vec<&TokenSequence> = batch.iter().map(|&i| &train[i]).collect();
            let (ids, labels) = batch_of(&refs)?;
            let loss = model.accumulate_gradients(&ids, &labels, Some(rng::derive_indexed(cfg.seed, "dropout", step)))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}, step {step}")));
            }
            loss_sum += loss.as_f64() * batch.len() as f64;
            optimizer.step(&mut model.parameters_mut())?;
            step += 1;
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_accuracy = if valid.is_empty() { None } else { Some(accuracy_on(&model, valid)?) };
        history.push(EpochRecord { epoch, train_loss, val_accuracy });
        log::debug!("epoch {epoch}: loss {train_loss:.5} val_acc {val_accuracy:?}");

        let score = val_accuracy.unwrap_or(-train_loss);
        if score > best_score {
            best_score = score;
            best_epoch = epoch;
            best_params = snapshot(&model);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }

    restore(&mut model, best_params);
    let final_loss = history[best_epoch - 1].train_loss;
    let meta = TrainingMetadata {
        seed: cfg.seed,
        epochs_run: history.len(),
        best_epoch,
        final_loss,
        optimizer: cfg.optimizer,
        batch_size: cfg.batch_size,
        initialization: "glorot_uniform".into(),
    };
    let weights = ModelWeights::from_model(&model, ctx, meta);
    Ok((weights, TrainHistory { epochs: history, best_epoch, stopped_early }))
}
