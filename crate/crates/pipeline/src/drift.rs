use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// Additive smoothing applied to each normalized probability.
pub const KL_EPS: f64 = 1e-9;

pub type Histogram = BTreeMap<String, f64>;

/// Class-label and token-unigram histograms of one data window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub id: String,
    pub classes: Histogram,
    pub tokens: Histogram,
}

impl Profile {
    pub fn new(id: &str) -> Self {
        Profile { id: id.to_string(), classes: Histogram::new(), tokens: Histogram::new() }
    }

    pub fn add(&mut self, class: &str, text: &str) {
        *self.classes.entry(class.to_string()).or_default() += 1.0;
        for t in text.split_whitespace() {
            *self.tokens.entry(t.to_string()).or_default() += 1.0;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.classes.values().sum::<f64>() <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub reference_id: String,
    pub live_id: String,
    /// Divergence per monitored feature (`class` and `token`).
    pub divergences: BTreeMap<String, f64>,
    pub threshold: f64,
    pub triggered: bool,
}

fn smoothed(h: &Histogram, support: &BTreeSet<&String>) -> Vec<f64> {
    let total: f64 = h.values().sum();
    let n = support.len() as f64;
    support
        .iter()
        .map(|k| {
            let p = if total > 0.0 { h.get(*k).copied().unwrap_or(0.0) / total } else { 0.0 };
            (p + KL_EPS) / (1.0 + n * KL_EPS)
        })
        .collect()
}

/// D(P || Q) in nats over the union of both supports, after add-epsilon
/// smoothing and renormalization.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> f64 {
    let support: BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    if support.is_empty() {
        return 0.0;
    }
    let ps = smoothed(p, &support);
    let qs = smoothed(q, &support);
    let d: f64 = ps.iter().zip(&qs).map(|(&a, &b)| a * (a / b).ln()).sum();
    d.max(0.0)
}

/// Divergence of the live window from the reference, per feature.
pub fn drift_check(reference: &Profile, live: &Profile, threshold: f64) -> Result<DriftReport> {
    if live.is_empty() {
        return Err(PipelineError::InvalidEvent(format!("live window {} is empty", live.id)));
    }
    let mut divergences = BTreeMap::new();
    divergences.insert("class".to_string(), kl_divergence(&live.classes, &reference.classes));
    divergences.insert("token".to_string(), kl_divergence(&live.tokens, &reference.tokens));
    let triggered = divergences.values().any(|&d| d > threshold);
    Ok(DriftReport { reference_id: reference.id.clone(), live_id: live.id.clone(), divergences, threshold, triggered })
}
