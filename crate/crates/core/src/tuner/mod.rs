//! Bayesian hyperparameter search: a Gaussian-process surrogate with an RBF
//! kernel and expected-improvement proposals over a mixed space.

mod gp;
mod space;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use gp::{expected_improvement, expected_improvement_from, Surrogate, JITTER};
pub use space::{Dimension, HyperParamSpace, ParamValue, Point};

use crate::models::{ArchitectureConfig, DnnConfig, TextCnnConfig};
use crate::{rng, Error, Result};

pub const DEFAULT_CANDIDATES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub point: Point,
    pub objective: Option<f64>,
    pub status: TrialStatus,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub budget: usize,
    pub n_init: usize,
    pub seed: u64,
    pub candidates: usize,
}

impl TuneConfig {
    pub fn new(budget: usize, n_init: usize, seed: u64) -> Self {
        TuneConfig { budget, n_init, seed, candidates: DEFAULT_CANDIDATES }
    }
}

/// EI statistics over the candidate pool of one model-based round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    pub trial: usize,
    pub candidates: usize,
    pub min_ei: f64,
    pub max_ei: f64,
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: Trial,
    pub history: Vec<Trial>,
    pub rounds: Vec<RoundDiagnostics>,
}

impl TuneResult {
    /// One row per trial: decoded hyperparameters, objective, status, wall time.
    pub fn history_csv(&self, space: &HyperParamSpace) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let names: Vec<&str> = space.dimensions().iter().map(Dimension::name).collect();
        let mut header = vec!["trial"];
        header.extend(&names);
        header.extend(["objective", "status", "wall_time_s"]);
        w.write_record(&header)?;
        for t in &self.history {
            let mut row = vec![t.index.to_string()];
            row.extend(names.iter().map(|n| t.point.get(*n).map(ToString::to_string).unwrap_or_default()));
            row.push(t.objective.map(|o| o.to_string()).unwrap_or_default());
            row.push(match t.status {
                TrialStatus::Done => "done".into(),
                TrialStatus::Failed => "failed".into(),
            });
            row.push(format!("{:.3}", t.wall_time_s));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }
}

fn evaluate<F>(objective: &mut F, index: usize, point: Point) -> Trial
where
    F: FnMut(&Point) -> Result<f64>,
{
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| objective(&point)));
    let wall_time_s = start.elapsed().as_secs_f64();
    let (objective, error) = match outcome {
        Ok(Ok(v)) if v.is_finite() => (Some(v), None),
        Ok(Ok(v)) => (None, Some(format!("non-finite objective {v}"))),
        Ok(Err(e)) => (None, Some(e.to_string())),
        Err(p) => (
            None,
            Some(
                p.downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| p.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "objective panicked".into()),
            ),
        ),
    };
    if let Some(e) = &error {
        log::warn!("trial {index} failed: {e}");
    }
    let status = if objective.is_some() { TrialStatus::Done } else { TrialStatus::Failed };
    Trial { index, point, objective, status, error, wall_time_s }
}

/// Maximizes `objective` over `space`: a seeded Latin-hypercube design of
/// `n_init` points, then one EI-argmax proposal per remaining trial chosen
/// from a fresh pool of candidate draws. Failed evaluations are kept in the
/// history but never fitted or returned as best.
pub fn tune<F>(space: &HyperParamSpace, mut objective: F, cfg: &TuneConfig) -> Result<TuneResult>
where
    F: FnMut(&Point) -> Result<f64>,
{
    if cfg.n_init < 2 || cfg.budget < cfg.n_init {
        return Err(Error::invalid(format!("need budget >= n_init >= 2, got budget {} n_init {}", cfg.budget, cfg.n_init)));
    }
    if cfg.candidates == 0 {
        return Err(Error::invalid("candidate pool must be non-empty"));
    }
    let mut history = Vec::with_capacity(cfg.budget);
    let mut encoded: Vec<Vec<f64>> = Vec::with_capacity(cfg.budget);
    let mut rounds = Vec::new();

    let design = space.latin_hypercube(cfg.n_init, &mut rng::stream(cfg.seed, "tuner.lhs"));
    for x in design {
        let point = space.decode(&x)?;
        let x = space.encode(&point)?;
        history.push(evaluate(&mut objective, history.len(), point));
        encoded.push(x);
    }

    for index in cfg.n_init..cfg.budget {
        let mut r = rng::seeded(rng::derive_indexed(cfg.seed, "tuner.candidates", index as u64));
        let pool: Vec<Vec<f64>> = (0..cfg.candidates).map(|_| space.sample(&mut r)).collect();
        let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = history
            .iter()
            .zip(&encoded)
            .filter_map(|(t, x)| Some((x.clone(), t.objective?)))
            .unzip();
        let choice = if ys.is_empty() {
            pool[0].clone()
        } else {
            let s = Surrogate::fit(&xs, &ys)?;
            let incumbent = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let eis: Vec<f64> = pool.iter().map(|x| expected_improvement(&s, x, incumbent)).collect();
            let arg = (0..eis.len()).fold(0, |b, i| if eis[i] > eis[b] { i } else { b });
            rounds.push(RoundDiagnostics {
                trial: index,
                candidates: pool.len(),
                min_ei: eis.iter().cloned().fold(f64::INFINITY, f64::min),
                max_ei: eis[arg],
                incumbent,
            });
            pool[arg].clone()
        };
        let point = space.decode(&choice)?;
        let x = space.encode(&point)?;
        history.push(evaluate(&mut objective, index, point));
        encoded.push(x);
    }

    let best = history
        .iter()
        .filter(|t| t.status == TrialStatus::Done)
        .fold(None::<&Trial>, |b, t| match b {
            Some(b) if b.objective >= t.objective => Some(b),
            _ => Some(t),
        })
        .cloned()
        .ok_or(Error::AllTrialsFailed)?;
    Ok(TuneResult { best, history, rounds })
}

/// DNN search ranges.
pub fn dnn_space() -> HyperParamSpace {
    HyperParamSpace::new(vec![
        Dimension::integer("initial_neurons", 11, 174),
        Dimension::continuous("neuron_pct", 0.35, 1.0),
        Dimension::continuous("neuron_shrink", 0.25, 0.95),
        Dimension::continuous("dropout", 0.10, 0.75),
        Dimension::integer("embedding_dim", 11, 87),
        Dimension::integer("n_layer", 1, 15),
    ])
    .expect("static space is valid")
}

/// Text-CNN search ranges. One kernel size per candidate; dropout is fixed.
pub fn text_cnn_space() -> HyperParamSpace {
    HyperParamSpace::new(vec![
        Dimension::categorical("filters", vec![ParamValue::Int(64), ParamValue::Int(128), ParamValue::Int(256)]),
        Dimension::integer("kernel_size", 1, 10),
        Dimension::integer("embedding_dim", 50, 150),
        Dimension::integer("n_layer", 1, 5),
    ])
    .expect("static space is valid")
}

fn int(point: &Point, name: &str) -> Result<usize> {
    point
        .get(name)
        .and_then(ParamValue::as_i64)
        .filter(|v| *v >= 0)
        .map(|v| v as usize)
        .ok_or_else(|| Error::invalid(format!("point lacks integer {name:?}")))
}

fn float(point: &Point, name: &str) -> Result<f64> {
    point.get(name).and_then(ParamValue::as_f64).ok_or_else(|| Error::invalid(format!("point lacks number {name:?}")))
}

pub fn dnn_config_from(point: &Point) -> Result<DnnConfig> {
    Ok(DnnConfig {
        initial_neurons: int(point, "initial_neurons")?,
        neuron_pct: float(point, "neuron_pct")?,
        neuron_shrink: float(point, "neuron_shrink")?,
        dropout: float(point, "dropout")?,
        embedding_dim: int(point, "embedding_dim")?,
        n_layer_cap: int(point, "n_layer")?,
    })
}

pub fn text_cnn_config_from(point: &Point) -> Result<TextCnnConfig> {
    Ok(TextCnnConfig {
        kernel_sizes: vec![int(point, "kernel_size")?],
        filters_per_kernel: int(point, "filters")?,
        embedding_dim: int(point, "embedding_dim")?,
        dropout: TextCnnConfig::prose_345().dropout,
        n_conv_blocks: int(point, "n_layer")?,
    })
}

/// Space for an architecture and the decoder from its points.
pub fn space_for(arch: crate::models::Architecture) -> HyperParamSpace {
    match arch {
        crate::models::Architecture::Dnn => dnn_space(),
        crate::models::Architecture::TextCnn => text_cnn_space(),
    }
}

pub fn config_from(arch: crate::models::Architecture, point: &Point) -> Result<ArchitectureConfig> {
    Ok(match arch {
        crate::models::Architecture::Dnn => ArchitectureConfig::Dnn(dnn_config_from(point)?),
        crate::models::Architecture::TextCnn => ArchitectureConfig::TextCnn(text_cnn_config_from(point)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> HyperParamSpace {
        HyperParamSpace::new(vec![Dimension::continuous("x", 0.0, 1.0)]).unwrap()
    }

    fn x_of(p: &Point) -> f64 {
        p["x"].as_f64().unwrap()
    }

    #[test]
    fn finds_quadratic_optimum() {
        let res = tune(&unit(), |p| Ok(-(x_of(p) - 0.3).powi(2)), &TuneConfig::new(20, 8, 1)).unwrap();
        assert_eq!(res.history.len(), 20);
        assert!((x_of(&res.best.point) - 0.3).abs() < 0.05, "{:?}", res.best);
        assert_eq!(res.rounds.len(), 12);
        assert!(res.rounds.iter().all(|r| r.min_ei >= 0.0 && r.candidates == 1024));
    }

    #[test]
    fn budget_equal_to_design_is_random_search() {
        let res = tune(&unit(), |p| Ok(x_of(p)), &TuneConfig::new(5, 5, 2)).unwrap();
        assert!(res.rounds.is_empty());
        let best = res.history.iter().map(|t| t.objective.unwrap()).fold(f64::MIN, f64::max);
        assert_eq!(res.best.objective, Some(best));
    }

    #[test]
    fn deterministic_history() {
        let run = || {
            tune(&unit(), |p| Ok((5.0 * x_of(p)).sin()), &TuneConfig::new(12, 4, 7))
                .unwrap()
                .history
                .into_iter()
                .map(|t| (t.point, t.objective))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let mut calls = 0;
        let res = tune(
            &unit(),
            |p| {
                calls += 1;
                match calls % 3 {
                    0 => Err(Error::invalid("bad config")),
                    1 if calls > 6 => panic!("exploded"),
                    _ => Ok(-x_of(p)),
                }
            },
            &TuneConfig::new(10, 3, 3),
        )
        .unwrap();
        assert_eq!(res.history.len(), 10);
        assert!(res.history.iter().any(|t| t.status == TrialStatus::Failed));
        assert_eq!(res.best.status, TrialStatus::Done);
        assert!(res.history.iter().filter(|t| t.status == TrialStatus::Failed).all(|t| t.objective.is_none()));
    }

    #[test]
    fn all_failures_reported() {
        let r = tune(&unit(), |_| Err(Error::invalid("no")), &TuneConfig::new(4, 2, 0));
        assert!(matches!(r, Err(Error::AllTrialsFailed)));
        let r = tune(&unit(), |_| Ok(f64::NAN), &TuneConfig::new(4, 2, 0));
        assert!(matches!(r, Err(Error::AllTrialsFailed)));
    }

    #[test]
    fn preconditions() {
        assert!(tune(&unit(), |_| Ok(0.0), &TuneConfig::new(5, 8, 0)).is_err());
        assert!(tune(&unit(), |_| Ok(0.0), &TuneConfig::new(5, 1, 0)).is_err());
    }

    #[test]
    fn model_spaces_decode_to_valid_configs() {
        let mut r = crate::rng::seeded(5);
        for _ in 0..50 {
            let d = dnn_config_from(&dnn_space().decode(&dnn_space().sample(&mut r)).unwrap()).unwrap();
            d.validate_ranges().unwrap();
            let t = text_cnn_config_from(&text_cnn_space().decode(&text_cnn_space().sample(&mut r)).unwrap()).unwrap();
            t.validate_ranges().unwrap();
        }
    }

    #[test]
    fn history_csv_layout() {
        let space = unit();
        let res = tune(&space, |p| Ok(x_of(p)), &TuneConfig::new(3, 2, 0)).unwrap();
        let csv = res.history_csv(&space).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("trial,x,objective,status,wall_time_s"));
        assert_eq!(lines.count(), 3);
    }
}
