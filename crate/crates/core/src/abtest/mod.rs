//! Cross-validated per-class model comparison: fold metrics, mean/median
//! aggregation, logit-transformed one-way ANOVA and a per-class winner.

mod anova;
mod folds;

use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use anova::{gaussian_transform, one_way_anova, Anova, LOGIT_EPS};
pub use folds::{assign_folds, k_fold_split, Folds};

use crate::corpus::TokenSequence;
use crate::eval::{confusion_matrix, f_beta, precision_recall, DEFAULT_BETA};
use crate::models::{build_model, train, ArchitectureConfig, ModelContext, TrainConfig};
use crate::{rng, Error, Result};

/// Folds used by the reference procedure.
pub const DEFAULT_K: usize = 37;
pub const DEFAULT_ALPHA: f64 = 0.05;

pub const HYPOTHESIS_NOTE: &str =
    "one-way ANOVA per class on logit-transformed fold metrics; H0: equal group means, rejected when p < alpha";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Precision,
    Recall,
    FBeta,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Precision, Metric::Recall, Metric::FBeta];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::FBeta => "f_beta",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "precision" => Ok(Metric::Precision),
            "recall" => Ok(Metric::Recall),
            "f_beta" | "fbeta" => Ok(Metric::FBeta),
            other => Err(Error::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    #[default]
    Mean,
    Median,
}

/// Per-class metrics of one model on one held-out fold. `None` marks a class
/// with no examples in that fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub model: String,
    pub fold: usize,
    pub precision: Vec<Option<f64>>,
    pub recall: Vec<Option<f64>>,
    pub accuracy: f64,
}

impl FoldResult {
    pub fn value(&self, class: usize, metric: Metric, beta: f64) -> Option<f64> {
        let p = self.precision[class]?;
        let r = self.recall[class]?;
        match metric {
            Metric::Precision => Some(p),
            Metric::Recall => Some(r),
            Metric::FBeta => f_beta(p, r, beta).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub fold: usize,
    pub reason: String,
}

/// All folds of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRun {
    pub model: String,
    pub k: usize,
    pub n_classes: usize,
    pub results: Vec<FoldResult>,
    pub failed: Vec<FoldFailure>,
}

impl CvRun {
    /// Folds that contributed a value for each class.
    pub fn fold_counts(&self) -> Vec<usize> {
        (0..self.n_classes).map(|c| self.results.iter().filter(|r| r.recall[c].is_some()).count()).collect()
    }

    pub fn samples(&self, class: usize, metric: Metric, beta: f64) -> Vec<f64> {
        self.results.iter().filter_map(|r| r.value(class, metric, beta)).collect()
    }

    pub fn value_count(&self, metric: Metric, beta: f64) -> usize {
        (0..self.n_classes).map(|c| self.samples(c, metric, beta).len()).sum()
    }

    pub fn mean_accuracy(&self) -> Option<f64> {
        (!self.results.is_empty())
            .then(|| self.results.iter().map(|r| r.accuracy).sum::<f64>() / self.results.len() as f64)
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn fold_metrics(model: &str, fold: usize, preds: &[usize], truth: &[usize], n_classes: usize) -> Result<FoldResult> {
    let cm = confusion_matrix(preds, truth, n_classes)?;
    let m = precision_recall(&cm);
    let present = |c: usize| cm.support(c) > 0;
    Ok(FoldResult {
        model: model.to_string(),
        fold,
        precision: (0..n_classes).map(|c| present(c).then_some(m.classes[c].precision)).collect(),
        recall: (0..n_classes).map(|c| present(c).then_some(m.classes[c].recall)).collect(),
        accuracy: crate::eval::accuracy(&cm)?,
    })
}

/// Runs `fit_predict(fold, train_idx, test_idx)` for every fold, in parallel,
/// and scores the returned test predictions against `labels`. Failed or
/// panicking folds are recorded and left out.
pub fn run_cv<F>(model: &str, labels: &[usize], n_classes: usize, folds: &Folds, fit_predict: F) -> CvRun
where
    F: Fn(usize, &[usize], &[usize]) -> Result<Vec<usize>> + Sync,
{
    let outcomes: Vec<(usize, Result<FoldResult>)> = (0..folds.k())
        .into_par_iter()
        .map(|fold| {
            let test = folds.test(fold);
            let train_idx = folds.train(fold);
            let run = catch_unwind(AssertUnwindSafe(|| fit_predict(fold, &train_idx, &test)))
                .unwrap_or_else(|p| Err(Error::invalid(format!("fold panicked: {}", panic_message(p)))));
            let scored = run.and_then(|preds| {
                if preds.len() != test.len() {
                    return Err(Error::shape(format!("{} predictions for {} test items", preds.len(), test.len())));
                }
                let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
                fold_metrics(model, fold, &preds, &truth, n_classes)
            });
            (fold, scored)
        })
        .collect();
    let mut results = Vec::new();
    let mut failed = Vec::new();
    for (fold, r) in outcomes {
        match r {
            Ok(r) => results.push(r),
            Err(e) => {
                log::warn!("{model}: fold {fold} failed: {e}");
                failed.push(FoldFailure { fold, reason: e.to_string() });
            }
        }
    }
    CvRun { model: model.to_string(), k: folds.k(), n_classes, results, failed }
}

/// Cross-validates one architecture on encoded sequences. Each fold trains a
/// fresh model on the remaining folds with fold-derived seeds.
pub fn run_model_cv(
    name: &str,
    config: &ArchitectureConfig,
    train_cfg: &TrainConfig,
    data: &[TokenSequence],
    vocab_size: usize,
    ctx: &ModelContext,
    max_len: usize,
    folds: &Folds,
) -> CvRun {
    let labels: Vec<usize> = data.iter().map(|s| s.label_id).collect();
    let n_classes = ctx.class_list.len();
    run_cv(name, &labels, n_classes, folds, |fold, train_idx, test_idx| {
        let seed = rng::derive_indexed(train_cfg.seed, name, fold as u64);
        let model = build_model::<f64>(config, vocab_size, n_classes, max_len, seed)?;
        let train_set: Vec<TokenSequence> = train_idx.iter().map(|&i| data[i].clone()).collect();
        let cfg = TrainConfig { seed, ..train_cfg.clone() };
        let (weights, _) = train(model, &train_set, &[], &cfg, ctx)?;
        let test_set: Vec<TokenSequence> = test_idx.iter().map(|&i| data[i].clone()).collect();
        let preds = crate::models::predict(&weights, &test_set, &ctx.vocab_hash)?;
        Ok(preds.into_iter().map(|p| p.class_index).collect())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub model: String,
    pub class: usize,
    pub metric: Metric,
    pub mean: f64,
    pub median: f64,
    pub n: usize,
}

impl Cell {
    pub fn get(&self, s: Statistic) -> f64 {
        match s {
            Statistic::Mean => self.mean,
            Statistic::Median => self.median,
        }
    }
}

/// Mean and median per (model, class, metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub models: Vec<String>,
    pub n_classes: usize,
    pub beta: f64,
    pub cells: Vec<Cell>,
}

impl MetricTable {
    pub fn get(&self, model: &str, class: usize, metric: Metric) -> Option<&Cell> {
        self.cells.iter().find(|c| c.model == model && c.class == class && c.metric == metric)
    }
}

pub fn aggregate(runs: &[CvRun], beta: f64) -> MetricTable {
    let n_classes = runs.iter().map(|r| r.n_classes).max().unwrap_or(0);
    let mut cells = Vec::new();
    for run in runs {
        for class in 0..run.n_classes {
            for metric in Metric::ALL {
                let xs = run.samples(class, metric, beta);
                if xs.is_empty() {
                    continue;
                }
                cells.push(Cell {
                    model: run.model.clone(),
                    class,
                    metric,
                    mean: crate::stats::mean(&xs),
                    median: crate::stats::median(&xs),
                    n: xs.len(),
                });
            }
        }
    }
    MetricTable { models: runs.iter().map(|r| r.model.clone()).collect(), n_classes, beta, cells }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub class: usize,
    pub metric: Metric,
    pub f_statistic: f64,
    pub p_value: f64,
    pub group_sizes: Vec<usize>,
}

/// Per-class ANOVA across models on the transformed fold values. Classes where
/// some model has fewer than two values are left out.
pub fn anova_by_class(runs: &[CvRun], metric: Metric, beta: f64) -> Vec<AnovaResult> {
    let n_classes = runs.iter().map(|r| r.n_classes).max().unwrap_or(0);
    (0..n_classes)
        .filter_map(|class| {
            let groups: Vec<Vec<f64>> =
                runs.iter().map(|r| gaussian_transform(&r.samples(class, metric, beta))).collect();
            match one_way_anova(&groups) {
                Ok(a) => Some(AnovaResult {
                    class,
                    metric,
                    f_statistic: a.f_statistic,
                    p_value: a.p_value,
                    group_sizes: a.group_sizes,
                }),
                Err(e) => {
                    log::info!("class {class}: no ANOVA for {metric}: {e}");
                    None
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub class: usize,
    pub winner: String,
    pub value: f64,
    pub p_value: Option<f64>,
    pub significant: bool,
    pub alpha: f64,
}

/// Per class, the model with the highest aggregate; ties go to the higher
/// aggregate recall, then to the lexicographically smaller name.
pub fn recommend(
    table: &MetricTable,
    anova: &[AnovaResult],
    alpha: f64,
    statistic: Statistic,
    metric: Metric,
) -> Vec<Recommendation> {
    (0..table.n_classes)
        .filter_map(|class| {
            let mut best: Option<(&str, f64, f64)> = None;
            for model in &table.models {
                let Some(cell) = table.get(model, class, metric) else { continue };
                let v = cell.get(statistic);
                let r = table.get(model, class, Metric::Recall).map(|c| c.get(statistic)).unwrap_or(0.0);
                let better = match best {
                    None => true,
                    Some((name, bv, br)) => {
                        v > bv || (v == bv && (r > br || (r == br && model.as_str() < name)))
                    }
                };
                if better {
                    best = Some((model, v, r));
                }
            }
            let (winner, value, _) = best?;
            let p_value = anova.iter().find(|a| a.class == class && a.metric == metric).map(|a| a.p_value);
            Some(Recommendation {
                class,
                winner: winner.to_string(),
                value,
                p_value,
                significant: p_value.is_some_and(|p| p < alpha),
                alpha,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbConfig {
    pub metric: Metric,
    pub statistic: Statistic,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for AbConfig {
    fn default() -> Self {
        AbConfig { metric: Metric::FBeta, statistic: Statistic::Mean, alpha: DEFAULT_ALPHA, beta: DEFAULT_BETA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassVerdict {
    pub class: String,
    pub winner: String,
    pub value: f64,
    pub p_value: Option<f64>,
    pub significant: bool,
}

/// Machine-readable outcome consumed by promotion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub hypothesis: String,
    pub metric: Metric,
    pub statistic: Statistic,
    pub alpha: f64,
    pub beta: f64,
    pub models: Vec<String>,
    pub excluded_models: Vec<String>,
    pub classes: Vec<ClassVerdict>,
    pub class_wins: BTreeMap<String, usize>,
    pub mean_accuracy: BTreeMap<String, f64>,
    /// Most class wins; ties go to the higher mean accuracy, then the name.
    pub overall_winner: String,
}

/// Everything the comparison produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbReport {
    pub class_names: Vec<String>,
    pub table: MetricTable,
    pub anova: Vec<AnovaResult>,
    pub recommendations: Vec<Recommendation>,
    pub verdict: Verdict,
}

impl AbReport {
    /// class, one aggregate column per model, F, p, winner, significant.
    pub fn to_csv(&self) -> Result<String> {
        let metric = self.verdict.metric;
        let statistic = self.verdict.statistic;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["class".to_string()];
        header.extend(self.table.models.iter().map(|m| format!("{m}_{}", metric.as_str())));
        header.extend(["f_statistic", "p_value", "winner", "significant"].map(String::from));
        w.write_record(&header)?;
        for rec in &self.recommendations {
            let mut row = vec![self.class_names[rec.class].clone()];
            for m in &self.table.models {
                row.push(self.table.get(m, rec.class, metric).map(|c| c.get(statistic).to_string()).unwrap_or_default());
            }
            let a = self.anova.iter().find(|a| a.class == rec.class && a.metric == metric);
            row.push(a.map(|a| a.f_statistic.to_string()).unwrap_or_default());
            row.push(a.map(|a| a.p_value.to_string()).unwrap_or_default());
            row.push(rec.winner.clone());
            row.push(rec.significant.to_string());
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(format!("# {HYPOTHESIS_NOTE}\n{}", String::from_utf8_lossy(&bytes)))
    }
}

/// Aggregates, tests and ranks a set of CV runs. Models that failed every
/// fold are excluded; at least two must remain.
pub fn compare(runs: &[CvRun], class_names: &[String], cfg: &AbConfig) -> Result<AbReport> {
    let (kept, dropped): (Vec<&CvRun>, Vec<&CvRun>) = runs.iter().partition(|r| !r.results.is_empty());
    for r in &dropped {
        log::warn!("model {} failed every fold and is excluded", r.model);
    }
    if kept.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 models with successful folds, have {}", kept.len())));
    }
    let kept: Vec<CvRun> = kept.into_iter().cloned().collect();
    let table = aggregate(&kept, cfg.beta);
    let mut anova = Vec::new();
    for metric in Metric::ALL {
        anova.extend(anova_by_class(&kept, metric, cfg.beta));
    }
    let recommendations = recommend(&table, &anova, cfg.alpha, cfg.statistic, cfg.metric);

    let mut class_wins: BTreeMap<String, usize> = kept.iter().map(|r| (r.model.clone(), 0)).collect();
    for r in &recommendations {
        *class_wins.entry(r.winner.clone()).or_default() += 1;
    }
    let mean_accuracy: BTreeMap<String, f64> =
        kept.iter().filter_map(|r| Some((r.model.clone(), r.mean_accuracy()?))).collect();
    let overall_winner = class_wins
        .iter()
        .max_by(|a, b| {
            a.1.cmp(b.1)
                .then_with(|| mean_accuracy[a.0].total_cmp(&mean_accuracy[b.0]))
                .then_with(|| b.0.cmp(a.0))
        })
        .map(|(m, _)| m.clone())
        .expect("at least two models");

    let verdict = Verdict {
        hypothesis: HYPOTHESIS_NOTE.to_string(),
        metric: cfg.metric,
        statistic: cfg.statistic,
        alpha: cfg.alpha,
        beta: cfg.beta,
        models: table.models.clone(),
        excluded_models: dropped.iter().map(|r| r.model.clone()).collect(),
        classes: recommendations
            .iter()
            .map(|r| ClassVerdict {
                class: class_names.get(r.class).cloned().unwrap_or_else(|| r.class.to_string()),
                winner: r.winner.clone(),
                value: r.value,
                p_value: r.p_value,
                significant: r.significant,
            })
            .collect(),
        class_wins,
        mean_accuracy,
        overall_winner,
    };
    Ok(AbReport { class_names: class_names.to_vec(), table, anova, recommendations, verdict })
}
