use serde::{Deserialize, Serialize};

use super::{Model, ModelWeights};
use crate::corpus::TokenSequence;
use crate::nn::IdBatch;
use crate::{Error, Result, Scalar};

/// Confidence bands at 0.8 and 0.9 (lower bounds inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceBand {
    High,
    Medium,
    Low,
}

impl ConfidenceBand {
    pub fn of(confidence: f64) -> Self {
        if confidence >= 0.9 {
            ConfidenceBand::High
        } else if confidence >= 0.8 {
            ConfidenceBand::Medium
        } else {
            ConfidenceBand::Low
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ConfidenceBand::High => "high",
            ConfidenceBand::Medium => "medium",
            ConfidenceBand::Low => "low",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub class_index: usize,
    pub code: String,
    pub confidence: f64,
    pub band: ConfidenceBand,
}

impl Prediction {
    /// The `k` most probable (code, probability) pairs; ties keep class order.
    pub fn top_k<'a>(&self, classes: &'a [String], k: usize) -> Vec<(&'a str, f64)> {
        let mut idx: Vec<usize> = (0..self.probabilities.len()).collect();
        idx.sort_by(|&a, &b| self.probabilities[b].total_cmp(&self.probabilities[a]).then(a.cmp(&b)));
        idx.into_iter().take(k).map(|i| (classes[i].as_str(), self.probabilities[i])).collect()
    }
}

/// A model rebuilt from frozen weights. Prediction takes `&self` and is
/// safe to share across threads.
#[derive(Debug, Clone)]
pub struct Predictor<T> {
    model: Model<T>,
    vocab_hash: String,
    class_list: Vec<String>,
}

impl<T: Scalar> Predictor<T> {
    pub fn new(weights: &ModelWeights) -> Result<Self> {
        Ok(Predictor {
            model: weights.to_model()?,
            vocab_hash: weights.vocab_hash.clone(),
            class_list: weights.class_list.clone(),
        })
    }

    pub fn class_list(&self) -> &[String] {
        &self.class_list
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn predict_ids(&self, rows: &[Vec<usize>], vocab_hash: &str) -> Result<Vec<Prediction>> {
        if vocab_hash != self.vocab_hash {
            return Err(Error::VocabularyMismatch { expected: self.vocab_hash.clone(), actual: vocab_hash.to_string() });
        }
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(256) {
            let probs = self.model.probabilities(&IdBatch::from_rows(chunk)?)?;
            let c = probs.dim(1);
            for row in probs.data().chunks(c) {
                let p: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
                let (class_index, confidence) = p
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
                out.push(Prediction {
                    code: self.class_list[class_index].clone(),
                    band: ConfidenceBand::of(confidence),
                    probabilities: p,
                    class_index,
                    confidence,
                });
            }
        }
        Ok(out)
    }

    pub fn predict(&self, inputs: &[TokenSequence], vocab_hash: &str) -> Result<Vec<Prediction>> {
        let rows: Vec<Vec<usize>> = inputs.iter().map(|s| s.ids.clone()).collect();
        self.predict_ids(&rows, vocab_hash)
    }
}

/// One-shot prediction from weights; `vocab_hash` is the hash of the
/// vocabulary the inputs were tokenized with.
pub fn predict(weights: &ModelWeights, inputs: &[TokenSequence], vocab_hash: &str) -> Result<Vec<Prediction>> {
    Predictor::<f64>::new(weights)?.predict(inputs, vocab_hash)
}
