//! Modelling steps shared by the command line and the pipeline actions.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use hscls_core::abtest::{self, AbReport};
use hscls_core::corpus::{
    build_vocabulary, combined_text, encode_dataset, filter_by_assurance, stratified_split, stratified_upsample, tokenize,
    write_dataset, Dataset, DescriptionRow, HsCode, RawRecord, StopWords, TokenSequence, Vocabulary,
};
use hscls_core::eval::{self, BandTable, PerClassMetrics};
use hscls_core::models::{
    accuracy_on, build_model, train, Architecture, ArchitectureConfig, ModelContext, ModelWeights, Predictor, TrainHistory,
};
use hscls_core::tuner::{self, HyperParamSpace, TuneConfig, TuneResult};
use hscls_core::{rng, TOOL_VERSION};
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, UpsampleMode};
use crate::drift::Profile;
use crate::error::{PipelineError, Result};
use crate::fsutil;

pub fn stopwords() -> StopWords {
    StopWords::builtin()
}

pub fn record_text(r: &RawRecord, sw: &StopWords) -> String {
    combined_text(&r.short_description, &r.medium_description, r.etim.as_deref(), sw)
}

pub fn row_text(r: &DescriptionRow, sw: &StopWords) -> String {
    combined_text(&r.short_description, &r.medium_description, r.etim.as_deref(), sw)
}

pub fn class_names(data: &Dataset) -> Vec<String> {
    data.classes().iter().map(|c| c.to_string()).collect()
}

fn parse_classes(names: &[String]) -> Result<Vec<HsCode>> {
    names.iter().map(|c| Ok(HsCode::parse(c)?)).collect()
}

pub fn empty_dataset() -> Dataset {
    Dataset::new(Vec::new()).expect("empty dataset is valid")
}

/// Records that are not upsample duplicates.
pub fn originals(data: &Dataset) -> Dataset {
    let pos: Vec<usize> = data.records().iter().enumerate().filter(|(_, r)| !r.upsampled).map(|(i, _)| i).collect();
    data.subset(&pos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub class: String,
    pub input: usize,
    pub filtered: usize,
    pub train: usize,
    pub test: usize,
    pub train_upsampled: usize,
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepReport {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub min_assurance: u8,
    pub test_fraction: f64,
    pub upsample: UpsampleMode,
    pub input_rows: usize,
    pub dropped_by_assurance: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub upsampled_added: usize,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub classes: Vec<ClassCounts>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    /// Training split, including appended upsample duplicates.
    pub train: Dataset,
    pub test: Dataset,
    pub vocab: Vocabulary,
    pub report: PrepReport,
}

/// filter, split, upsample the training side, then build the vocabulary from
/// the original training records.
pub fn prepare(data: &Dataset, cfg: &PipelineConfig) -> Result<Prepared> {
    let filtered = filter_by_assurance(data, cfg.min_assurance);
    let mut warnings: Vec<String> = filtered.warning.iter().cloned().collect();
    if filtered.dataset.is_empty() {
        return Err(PipelineError::Config(warnings.pop().unwrap_or_else(|| "no records left after filtering".into())));
    }
    let (train_raw, test) = stratified_split(&filtered.dataset, &cfg.split_config())?;
    let train = match cfg.upsample_config() {
        Some(u) => stratified_upsample(&train_raw, &u),
        None => train_raw.clone(),
    };
    let sw = stopwords();
    let texts: Vec<String> = train_raw.records().iter().map(|r| record_text(r, &sw)).collect();
    let vocab = build_vocabulary(&texts, cfg.vocab_size)?;

    let count = |d: &Dataset| d.class_counts().into_iter().map(|(k, v)| (k.to_string(), v)).collect::<BTreeMap<_, _>>();
    let (c_in, c_f, c_tr, c_te, c_up) =
        (count(data), count(&filtered.dataset), count(&train_raw), count(&test), count(&train));
    let classes = c_in
        .keys()
        .map(|k| {
            let g = |m: &BTreeMap<String, usize>| m.get(k).copied().unwrap_or(0);
            ClassCounts {
                class: k.clone(),
                input: g(&c_in),
                filtered: g(&c_f),
                train: g(&c_tr),
                test: g(&c_te),
                train_upsampled: g(&c_up),
                delta: g(&c_up) as i64 - g(&c_tr) as i64,
            }
        })
        .collect();
    let report = PrepReport {
        tool_version: TOOL_VERSION.into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        min_assurance: cfg.min_assurance,
        test_fraction: cfg.test_fraction,
        upsample: cfg.upsample,
        input_rows: data.len(),
        dropped_by_assurance: filtered.dropped,
        train_rows: train.len(),
        test_rows: test.len(),
        upsampled_added: train.len() - train_raw.len(),
        vocab_size: vocab.len(),
        vocab_hash: vocab.hash(),
        classes,
        warnings,
    };
    Ok(Prepared { train, test, vocab, report })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedPaths {
    pub train: PathBuf,
    pub test: PathBuf,
    pub vocab: PathBuf,
    pub report: PathBuf,
}

impl PreparedPaths {
    pub fn in_dir(dir: &Path) -> Self {
        PreparedPaths {
            train: dir.join("train.csv"),
            test: dir.join("test.csv"),
            vocab: dir.join("vocab.txt"),
            report: dir.join("prep_report.json"),
        }
    }
}

pub fn write_dataset_artifact(path: &Path, data: &Dataset, config_hash: &str) -> Result<()> {
    fsutil::atomic_write_with(path, |tmp| Ok(write_dataset(tmp, data)?))?;
    fsutil::write_meta(path, config_hash)
}

pub fn write_prepared(dir: &Path, p: &Prepared) -> Result<PreparedPaths> {
    let paths = PreparedPaths::in_dir(dir);
    let h = &p.report.config_hash;
    write_dataset_artifact(&paths.train, &p.train, h)?;
    write_dataset_artifact(&paths.test, &p.test, h)?;
    fsutil::write_artifact(&paths.vocab, p.vocab.to_text().as_bytes(), h)?;
    fsutil::write_json(&paths.report, &p.report)?;
    Ok(paths)
}

/// Holds out a stratified share of the original training records for early
/// stopping. Duplicates of held-out records are dropped from the fit set so
/// nothing leaks. Returns an empty validation set when disabled or when a
/// class is too small to split.
pub fn carve_validation(train: &Dataset, cfg: &PipelineConfig) -> Result<(Dataset, Dataset)> {
    let Some(split) = cfg.validation_split() else { return Ok((train.clone(), empty_dataset())) };
    let orig = originals(train);
    if let Some((c, n)) = orig.class_counts().into_iter().find(|(_, n)| *n < 2) {
        log::warn!("class {c} has {n} training record(s); training without a validation split");
        return Ok((train.clone(), empty_dataset()));
    }
    let (_, valid) = stratified_split(&orig, &split)?;
    let held: BTreeSet<&str> = valid.records().iter().map(|r| r.record_id.as_str()).collect();
    let fit: Vec<usize> =
        train.records().iter().enumerate().filter(|(_, r)| !held.contains(r.record_id.as_str())).map(|(i, _)| i).collect();
    Ok((train.subset(&fit), valid))
}

pub fn encode(data: &Dataset, vocab: &Vocabulary, classes: &[String], max_len: usize) -> Result<Vec<TokenSequence>> {
    Ok(encode_dataset(data, vocab, &parse_classes(classes)?, max_len, &stopwords())?)
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub weights: ModelWeights,
    pub history: TrainHistory,
    pub fit_rows: usize,
    pub validation_rows: usize,
}

/// Trains one model on `train` (with an internal validation carve) against
/// the class list of `train`.
pub fn train_model(
    config: &ArchitectureConfig,
    train_data: &Dataset,
    vocab: &Vocabulary,
    cfg: &PipelineConfig,
    label: &str,
) -> Result<Trained> {
    let classes = class_names(train_data);
    let (fit, valid) = carve_validation(train_data, cfg)?;
    let fit_seq = encode(&fit, vocab, &classes, cfg.max_len)?;
    let valid_seq = encode(&valid, vocab, &classes, cfg.max_len)?;
    let train_cfg = cfg.train_config(label);
    let model = build_model::<f64>(config, vocab.len(), classes.len(), cfg.max_len, rng::derive_seed(train_cfg.seed, "init"))?;
    let ctx = ModelContext { vocab_hash: vocab.hash(), class_list: classes };
    let (mut weights, history) = train(model, &fit_seq, &valid_seq, &train_cfg, &ctx)?;
    weights.config_hash = Some(cfg.hash());
    Ok(Trained { weights, history, fit_rows: fit.len(), validation_rows: valid.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub config_hash: Option<String>,
    pub architecture: Architecture,
    pub rows: usize,
    pub accuracy: f64,
    pub beta: f64,
    pub class_list: Vec<String>,
    pub metrics: PerClassMetrics,
    pub bands: BandTable,
    pub confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    pub fn metrics_csv(&self) -> Result<String> {
        Ok(eval::metrics_csv(&self.metrics, &self.class_list)?)
    }
}

/// Scores frozen weights on a labeled set.
pub fn evaluate(weights: &ModelWeights, data: &Dataset, vocab: &Vocabulary, beta: f64) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(PipelineError::Config("evaluation set is empty".into()));
    }
    let seqs = encode(data, vocab, &weights.class_list, weights.max_len)?;
    let preds = Predictor::<f64>::new(weights)?.predict(&seqs, &vocab.hash())?;
    let p: Vec<usize> = preds.iter().map(|p| p.class_index).collect();
    let labels: Vec<usize> = seqs.iter().map(|s| s.label_id).collect();
    let cm = eval::confusion_matrix(&p, &labels, weights.class_list.len())?;
    let metrics = eval::precision_recall(&cm).with_f_beta(beta)?;
    Ok(EvalReport {
        tool_version: TOOL_VERSION.into(),
        config_hash: weights.config_hash.clone(),
        architecture: weights.config.architecture(),
        rows: data.len(),
        accuracy: eval::accuracy(&cm)?,
        beta,
        class_list: weights.class_list.clone(),
        bands: eval::band_table(&metrics),
        metrics,
        confusion: cm.rows(),
    })
}

/// Accuracy of `weights` on labeled data whose classes may include codes the
/// model does not know; those records count as misclassified.
pub fn holdout_accuracy(weights: &ModelWeights, data: &Dataset, vocab: &Vocabulary) -> Result<f64> {
    if data.is_empty() {
        return Err(PipelineError::Config("holdout set is empty".into()));
    }
    let known: BTreeSet<&str> = weights.class_list.iter().map(String::as_str).collect();
    let pos: Vec<usize> =
        data.records().iter().enumerate().filter(|(_, r)| known.contains(r.hs_code.as_str())).map(|(i, _)| i).collect();
    if pos.is_empty() {
        return Ok(0.0);
    }
    let seqs = encode(&data.subset(&pos), vocab, &weights.class_list, weights.max_len)?;
    let model = weights.to_model::<f64>()?;
    if vocab.hash() != weights.vocab_hash {
        return Err(hscls_core::Error::VocabularyMismatch { expected: weights.vocab_hash.clone(), actual: vocab.hash() }.into());
    }
    Ok(accuracy_on(&model, &seqs)? * pos.len() as f64 / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub record_id: String,
    pub code: String,
    pub confidence: f64,
    pub band: String,
    pub top3: Vec<(String, f64)>,
}

pub const PREDICTION_HEADER: [&str; 6] =
    ["record_id", "predicted_hs_code", "confidence", "band", "top3_codes", "top3_probs"];

pub fn predict_rows(weights: &ModelWeights, vocab: &Vocabulary, rows: &[DescriptionRow]) -> Result<Vec<PredictionRow>> {
    let sw = stopwords();
    let ids: Vec<String> = rows.iter().map(|r| r.record_id.clone()).collect();
    let texts: Vec<String> = rows.iter().map(|r| row_text(r, &sw)).collect();
    predict_texts(weights, vocab, &ids, &texts)
}

/// Predicts already-normalized texts.
pub fn predict_texts(
    weights: &ModelWeights,
    vocab: &Vocabulary,
    record_ids: &[String],
    texts: &[String],
) -> Result<Vec<PredictionRow>> {
    let ids: Vec<Vec<usize>> = texts.iter().map(|t| tokenize(t, vocab, weights.max_len)).collect();
    let predictor = Predictor::<f64>::new(weights)?;
    let preds = predictor.predict_ids(&ids, &vocab.hash())?;
    Ok(record_ids
        .iter()
        .zip(preds)
        .map(|(id, p)| PredictionRow {
            record_id: id.clone(),
            top3: p.top_k(predictor.class_list(), 3).into_iter().map(|(c, v)| (c.to_string(), v)).collect(),
            code: p.code,
            confidence: p.confidence,
            band: p.band.as_str().to_string(),
        })
        .collect())
}

pub fn predictions_csv(rows: &[PredictionRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PREDICTION_HEADER)?;
    for r in rows {
        let codes: Vec<&str> = r.top3.iter().map(|(c, _)| c.as_str()).collect();
        let probs: Vec<String> = r.top3.iter().map(|(_, p)| format!("{p:.6}")).collect();
        w.write_record([
            r.record_id.clone(),
            r.code.clone(),
            format!("{:.6}", r.confidence),
            r.band.clone(),
            codes.join(";"),
            probs.join(";"),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

/// Training-time reference distribution over original records.
pub fn reference_profile(train_data: &Dataset, id: &str) -> Profile {
    let sw = stopwords();
    let mut p = Profile::new(id);
    for r in train_data.records().iter().filter(|r| !r.upsampled) {
        p.add(r.hs_code.as_str(), &record_text(r, &sw));
    }
    p
}

/// Live window: unlabeled normalized texts, classes taken from the predictions.
pub fn live_profile(texts: &[String], predicted: &[String], id: &str) -> Profile {
    let mut p = Profile::new(id);
    for (t, c) in texts.iter().zip(predicted) {
        p.add(c, t);
    }
    p
}

/// Cross-validated comparison over the original records of `data`.
pub fn run_abtest(
    data: &Dataset,
    vocab: &Vocabulary,
    models: &[(String, ArchitectureConfig)],
    cfg: &PipelineConfig,
) -> Result<AbReport> {
    if models.len() < 2 {
        return Err(PipelineError::Config(format!("A/B test needs at least 2 models, got {}", models.len())));
    }
    let data = originals(data);
    let classes = class_names(&data);
    let seqs = encode(&data, vocab, &classes, cfg.max_len)?;
    let labels: Vec<usize> = seqs.iter().map(|s| s.label_id).collect();
    let folds = abtest::assign_folds(&labels, cfg.ab_k, rng::derive_seed(cfg.seed, "folds"))?;
    for (c, n) in &folds.small_classes {
        log::warn!("class {} has {n} records (< k = {}); it is scored only on folds where it appears", classes[*c], cfg.ab_k);
    }
    let ctx = ModelContext { vocab_hash: vocab.hash(), class_list: classes.clone() };
    let runs: Vec<_> = models
        .iter()
        .map(|(name, config)| {
            let train_cfg = cfg.train_config(&format!("abtest.{name}"));
            abtest::run_model_cv(name, config, &train_cfg, &seqs, vocab.len(), &ctx, cfg.max_len, &folds)
        })
        .collect();
    for r in &runs {
        for f in &r.failed {
            log::warn!("model {} fold {} failed: {}", r.model, f.fold, f.reason);
        }
    }
    Ok(abtest::compare(&runs, &classes, &cfg.ab_config())?)
}

#[derive(Debug, Clone)]
pub struct Tuned {
    pub config: ArchitectureConfig,
    pub result: TuneResult,
    pub space: HyperParamSpace,
}

/// Bayesian search over the architecture's space; the objective is
/// validation accuracy after a short training schedule.
pub fn tune_model(
    arch: Architecture,
    train_data: &Dataset,
    vocab: &Vocabulary,
    cfg: &PipelineConfig,
    budget: usize,
    n_init: usize,
) -> Result<Tuned> {
    let classes = class_names(train_data);
    let (fit, valid) = carve_validation(train_data, cfg)?;
    if valid.is_empty() {
        return Err(PipelineError::Config("tuning needs a validation split (validation_fraction > 0)".into()));
    }
    let fit_seq = encode(&fit, vocab, &classes, cfg.max_len)?;
    let valid_seq = encode(&valid, vocab, &classes, cfg.max_len)?;
    let ctx = ModelContext { vocab_hash: vocab.hash(), class_list: classes.clone() };
    let space = tuner::space_for(arch);
    let label = format!("tune.{arch}");
    let mut trial = 0u64;
    let objective = |point: &tuner::Point| -> hscls_core::Result<f64> {
        let config = tuner::config_from(arch, point)?;
        let mut train_cfg = cfg.train_config(&label);
        train_cfg.seed = rng::derive_indexed(train_cfg.seed, "trial", trial);
        train_cfg.epochs = cfg.tune_epochs;
        trial += 1;
        let model = build_model::<f64>(&config, vocab.len(), classes.len(), cfg.max_len, train_cfg.seed)?;
        let (weights, _) = train(model, &fit_seq, &valid_seq, &train_cfg, &ctx)?;
        accuracy_on(&weights.to_model::<f64>()?, &valid_seq)
    };
    let tcfg = TuneConfig::new(budget, n_init, rng::derive_seed(cfg.seed, &label));
    let result = tuner::tune(&space, objective, &tcfg)?;
    let config = tuner::config_from(arch, &result.best.point)?;
    Ok(Tuned { config, result, space })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hscls_core::corpus::synthetic::{generate, SyntheticSpec};

    fn corpus() -> Dataset {
        generate(&SyntheticSpec { classes: 3, per_class: 30, seed: 4, ..SyntheticSpec::default() }).unwrap()
    }

    fn small_cfg() -> PipelineConfig {
        PipelineConfig { test_fraction: 0.2, max_len: 12, epochs: 3, ab_k: 3, ..PipelineConfig::default() }
    }

    #[test]
    fn prepare_counts_and_vocab() {
        let p = prepare(&corpus(), &small_cfg()).unwrap();
        assert_eq!(p.report.input_rows, 90);
        assert_eq!(p.report.test_rows, 18);
        assert_eq!(p.report.train_rows, 72);
        assert_eq!(p.report.upsampled_added, 0);
        assert_eq!(p.report.classes.len(), 3);
        assert!(p.report.classes.iter().all(|c| c.delta == 0 && c.train + c.test == c.filtered));
        assert_eq!(p.report.vocab_hash, p.vocab.hash());
    }

    #[test]
    fn validation_carve_drops_duplicates_of_held_out() {
        let mut recs: Vec<RawRecord> = corpus().records().to_vec();
        let mut dup = recs[0].clone();
        dup.upsampled = true;
        recs.push(dup);
        let data = Dataset::new(recs).unwrap();
        let (fit, valid) = carve_validation(&data, &small_cfg()).unwrap();
        let held: BTreeSet<&str> = valid.records().iter().map(|r| r.record_id.as_str()).collect();
        assert!(!valid.is_empty());
        assert!(fit.records().iter().all(|r| !held.contains(r.record_id.as_str())));
        assert!(valid.records().iter().all(|r| !r.upsampled));
        assert_eq!(originals(&fit).len() + valid.len(), 90);
    }

    #[test]
    fn train_evaluate_predict() {
        let cfg = small_cfg();
        let p = prepare(&corpus(), &cfg).unwrap();
        let config = cfg.preset_config(Architecture::Dnn).unwrap();
        let t = train_model(&config, &p.train, &p.vocab, &cfg, "dnn").unwrap();
        assert_eq!(t.weights.config_hash.as_deref(), Some(cfg.hash().as_str()));
        let rep = evaluate(&t.weights, &p.test, &p.vocab, 1.2).unwrap();
        assert_eq!(rep.rows, 18);
        assert_eq!(rep.bands.precision.total(), 3);
        let h = holdout_accuracy(&t.weights, &p.test, &p.vocab).unwrap();
        assert!((h - rep.accuracy).abs() < 1e-12);

        let rows: Vec<DescriptionRow> = p
            .test
            .records()
            .iter()
            .map(|r| DescriptionRow {
                record_id: r.record_id.clone(),
                short_description: r.short_description.clone(),
                medium_description: r.medium_description.clone(),
                etim: r.etim.clone(),
            })
            .collect();
        let preds = predict_rows(&t.weights, &p.vocab, &rows).unwrap();
        let csv = predictions_csv(&preds).unwrap();
        assert_eq!(csv.lines().count(), 19);
        assert!(csv.starts_with("record_id,predicted_hs_code,confidence,band,top3_codes,top3_probs\n"));
        assert!(preds.iter().all(|r| r.top3.len() == 3 && r.top3[0].0 == r.code));
        assert_eq!(predictions_csv(&[]).unwrap().lines().count(), 1);
    }
}
