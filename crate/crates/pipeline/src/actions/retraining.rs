use std::path::PathBuf;

use hscls_core::abtest::{AbReport, Verdict};
use hscls_core::corpus::{read_dataset, Dataset, Vocabulary};
use hscls_core::models::{load_weights, save_weights, Architecture, ArchitectureConfig, ModelWeights};
use serde::{Deserialize, Serialize};

use super::require;
use crate::error::{PipelineError, Result};
use crate::executor::{ActionContext, ActionRegistry, Outcome};
use crate::fsutil;
use crate::machine::{action_id, RETRAINING_MACHINE};
use crate::ops::{self, EvalReport, PreparedPaths};
use crate::registry::{Provenance, RegisterRequest, Registry};

pub const INPUT: &str = "input.csv";
pub const DATA_INFO: &str = "data.json";
pub const TUNING_DIR: &str = "tuning";
pub const CANDIDATES_DIR: &str = "candidates";
pub const EVAL_DIR: &str = "eval";
pub const AB_CSV: &str = "ab_report.csv";
pub const AB_JSON: &str = "ab_report.json";
pub const VERDICT: &str = "verdict.json";
pub const REGISTERED: &str = "registered.json";
pub const DECISION: &str = "decision.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DataInfo {
    rows: usize,
    sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TunedConfig {
    config: ArchitectureConfig,
    objective: Option<f64>,
    trials: usize,
}

/// The candidate a retraining run put into the registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registered {
    pub version: u32,
    pub architecture: Architecture,
    pub holdout_accuracy: f64,
    pub selected_by: String,
}

/// Champion/challenger outcome, written before the promotion is applied so
/// a replay re-applies the same choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub candidate_version: u32,
    pub candidate_accuracy: f64,
    pub active_version: Option<u32>,
    pub active_accuracy: Option<f64>,
    pub promote: bool,
    pub reason: String,
}

pub(super) fn register(reg: &mut ActionRegistry) {
    let id = |s| action_id(RETRAINING_MACHINE, s);
    reg.insert(&id("validate_input"), validate_input)
        .insert(&id("preprocess"), preprocess)
        .insert(&id("tune_or_load_config"), tune_or_load_config)
        .insert(&id("train_candidates"), train_candidates)
        .insert(&id("evaluate"), evaluate)
        .insert(&id("ab_test"), ab_test)
        .insert(&id("register_candidate"), register_candidate)
        .insert(&id("promote_if_winner"), promote_if_winner);
}

fn paths(ctx: &ActionContext) -> PreparedPaths {
    PreparedPaths::in_dir(ctx.run_dir)
}

fn candidate_dir(ctx: &ActionContext, arch: Architecture) -> PathBuf {
    ctx.run_dir.join(CANDIDATES_DIR).join(arch.to_string())
}

fn load_prepared(ctx: &ActionContext) -> Result<(Dataset, Dataset, Vocabulary)> {
    let p = paths(ctx);
    if !p.vocab.is_file() {
        return Err(PipelineError::NotFound(format!("{} (written by preprocess)", p.vocab.display())));
    }
    Ok((read_dataset(&p.train)?, read_dataset(&p.test)?, Vocabulary::load(&p.vocab)?))
}

fn validate_input(ctx: &ActionContext) -> Result<Outcome> {
    let input = ctx.event.input().ok_or_else(|| PipelineError::InvalidEvent("no data path".into()))?;
    let data = read_dataset(&input)?;
    let dest = ctx.run_dir.join(INPUT);
    fsutil::atomic_copy(&input, &dest)?;
    let info = DataInfo { rows: data.len(), sha256: fsutil::file_digest(&dest)? };
    fsutil::write_json(&ctx.run_dir.join(DATA_INFO), &info)?;
    Ok(Outcome::Done(vec![format!("{} rows", info.rows)]))
}

fn preprocess(ctx: &ActionContext) -> Result<Outcome> {
    let data = read_dataset(&ctx.run_dir.join(INPUT))?;
    let prepared = ops::prepare(&data, ctx.config)?;
    ops::write_prepared(ctx.run_dir, &prepared)?;
    let r = &prepared.report;
    let mut notes = vec![format!("{} train / {} test rows, vocabulary {}", r.train_rows, r.test_rows, r.vocab_size)];
    notes.extend(r.warnings.iter().cloned());
    Ok(Outcome::Done(notes))
}

fn tuning_path(ctx: &ActionContext, arch: Architecture) -> PathBuf {
    ctx.run_dir.join(TUNING_DIR).join(format!("{arch}.json"))
}

fn tune_or_load_config(ctx: &ActionContext) -> Result<Outcome> {
    if !ctx.config.tune {
        return Ok(Outcome::Skipped("tuning disabled; using presets".into()));
    }
    let (train, _, vocab) = load_prepared(ctx)?;
    let mut notes = Vec::new();
    for &arch in &ctx.config.models {
        let path = tuning_path(ctx, arch);
        if path.is_file() {
            notes.push(format!("{arch}: kept earlier tuning result"));
            continue;
        }
        let tuned = ops::tune_model(arch, &train, &vocab, ctx.config, ctx.config.tune_budget, ctx.config.tune_n_init)?;
        let csv = tuned.result.history_csv(&tuned.space)?;
        fsutil::write_artifact(&path.with_extension("csv"), csv.as_bytes(), &ctx.config.hash())?;
        let out = TunedConfig { config: tuned.config, objective: tuned.result.best.objective, trials: tuned.result.history.len() };
        fsutil::write_json(&path, &out)?;
        notes.push(format!("{arch}: best validation accuracy {:?} over {} trials", out.objective, out.trials));
    }
    Ok(Outcome::Done(notes))
}

fn candidate_config(ctx: &ActionContext, arch: Architecture) -> Result<ArchitectureConfig> {
    let path = tuning_path(ctx, arch);
    if ctx.config.tune && path.is_file() {
        let t: TunedConfig = fsutil::read_json(&path)?;
        return Ok(t.config);
    }
    ctx.config.preset_config(arch)
}

fn train_candidates(ctx: &ActionContext) -> Result<Outcome> {
    let (train, _, vocab) = load_prepared(ctx)?;
    let mut notes = Vec::new();
    for &arch in &ctx.config.models {
        let dir = candidate_dir(ctx, arch);
        let wpath = dir.join("weights.bin");
        if wpath.is_file() {
            notes.push(format!("{arch}: kept earlier weights"));
            continue;
        }
        let config = candidate_config(ctx, arch)?;
        let trained = ops::train_model(&config, &train, &vocab, ctx.config, &format!("train.{arch}"))?;
        fsutil::ensure_dir(&dir)?;
        fsutil::write_artifact(&dir.join("history.csv"), trained.history.to_csv().as_bytes(), &ctx.config.hash())?;
        fsutil::atomic_write_with(&wpath, |tmp| Ok(save_weights(&trained.weights, tmp)?))?;
        notes.push(format!("{arch}: best epoch {} of {}", trained.history.best_epoch, trained.history.epochs.len()));
    }
    Ok(Outcome::Done(notes))
}

fn load_candidate(ctx: &ActionContext, arch: Architecture) -> Result<ModelWeights> {
    let path = candidate_dir(ctx, arch).join("weights.bin");
    if !path.is_file() {
        return Err(PipelineError::NotFound(format!("{} (written by train_candidates)", path.display())));
    }
    Ok(load_weights(&path)?)
}

fn eval_paths(ctx: &ActionContext, arch: Architecture) -> [PathBuf; 3] {
    let dir = ctx.run_dir.join(EVAL_DIR);
    [dir.join(format!("{arch}.json")), dir.join(format!("{arch}_metrics.csv")), dir.join(format!("{arch}_bands.csv"))]
}

fn evaluate(ctx: &ActionContext) -> Result<Outcome> {
    let (_, test, vocab) = load_prepared(ctx)?;
    let mut notes = Vec::new();
    for &arch in &ctx.config.models {
        let weights = load_candidate(ctx, arch)?;
        let report = ops::evaluate(&weights, &test, &vocab, ctx.config.ab_beta)?;
        let [json, metrics, bands] = eval_paths(ctx, arch);
        let h = ctx.config.hash();
        fsutil::write_artifact(&metrics, report.metrics_csv()?.as_bytes(), &h)?;
        fsutil::write_artifact(&bands, report.bands.to_csv().as_bytes(), &h)?;
        fsutil::write_json(&json, &report)?;
        notes.push(format!("{arch}: test accuracy {:.4}", report.accuracy));
    }
    Ok(Outcome::Done(notes))
}

fn ab_test(ctx: &ActionContext) -> Result<Outcome> {
    if ctx.config.models.len() < 2 {
        return Ok(Outcome::Skipped("a single candidate; nothing to compare".into()));
    }
    let (train, _, vocab) = load_prepared(ctx)?;
    let models: Vec<(String, ArchitectureConfig)> = ctx
        .config
        .models
        .iter()
        .map(|&a| Ok((a.to_string(), candidate_config(ctx, a)?)))
        .collect::<Result<_>>()?;
    let report: AbReport = ops::run_abtest(&train, &vocab, &models, ctx.config)?;
    fsutil::write_artifact(&ctx.run_dir.join(AB_CSV), report.to_csv()?.as_bytes(), &ctx.config.hash())?;
    fsutil::write_json(&ctx.run_dir.join(AB_JSON), &report)?;
    fsutil::write_json(&ctx.run_dir.join(VERDICT), &report.verdict)?;
    Ok(Outcome::Done(vec![format!("overall winner {}", report.verdict.overall_winner)]))
}

/// The A/B verdict when there is one, otherwise the best test accuracy.
fn select_winner(ctx: &ActionContext) -> Result<(Architecture, String)> {
    let verdict_path = ctx.run_dir.join(VERDICT);
    if ctx.config.models.len() >= 2 {
        let v: Verdict = require(&verdict_path, "ab_test")?;
        let arch = ctx
            .config
            .models
            .iter()
            .copied()
            .find(|a| a.to_string() == v.overall_winner)
            .ok_or_else(|| PipelineError::action("register_candidate", format!("unknown winner {}", v.overall_winner)))?;
        return Ok((arch, "ab_test".into()));
    }
    let mut best: Option<(Architecture, f64)> = None;
    for &arch in &ctx.config.models {
        let r: EvalReport = require(&eval_paths(ctx, arch)[0], "evaluate")?;
        if best.is_none_or(|(_, acc)| r.accuracy > acc) {
            best = Some((arch, r.accuracy));
        }
    }
    let (arch, _) = best.ok_or_else(|| PipelineError::Config("no models configured".into()))?;
    Ok((arch, "test_accuracy".into()))
}

fn register_candidate(ctx: &ActionContext) -> Result<Outcome> {
    let out = ctx.run_dir.join(REGISTERED);
    let (arch, selected_by) = select_winner(ctx)?;
    let (train, test, vocab) = load_prepared(ctx)?;
    let weights = load_candidate(ctx, arch)?;
    let accuracy = ops::holdout_accuracy(&weights, &test, &vocab)?;
    let info: DataInfo = require(&ctx.run_dir.join(DATA_INFO), "validate_input")?;
    let p = paths(ctx);

    let mut reports: Vec<PathBuf> = eval_paths(ctx, arch).into();
    reports.push(p.report.clone());
    for extra in [AB_CSV, VERDICT] {
        let path = ctx.run_dir.join(extra);
        if path.is_file() {
            reports.push(path);
        }
    }
    let data_path = std::path::absolute(ctx.run_dir.join(INPUT)).map_err(|e| PipelineError::io(ctx.run_dir, e))?;
    let req = RegisterRequest {
        weights: candidate_dir(ctx, arch).join("weights.bin"),
        vocab: p.vocab.clone(),
        reference: Some(ops::reference_profile(&train, ctx.run_id)),
        reports,
        holdout_accuracy: Some(accuracy),
        provenance: Provenance {
            run_id: Some(ctx.run_id.to_string()),
            data_sha256: Some(info.sha256),
            data_path: Some(data_path.to_string_lossy().into_owned()),
            seed: ctx.config.seed,
            config_hash: ctx.config.hash(),
        },
    };
    // register is idempotent by run id, so a replay returns the same version
    let entry = Registry::open(ctx.workspace.registry_dir())?.register(&req)?;
    let reg = Registered { version: entry.version(), architecture: arch, holdout_accuracy: accuracy, selected_by };
    fsutil::write_json(&out, &reg)?;
    Ok(Outcome::Done(vec![format!("{arch} registered as version {}", reg.version)]))
}

fn active_accuracy(registry: &Registry, version: u32, test: &Dataset) -> Result<f64> {
    let weights = load_weights(&registry.weights_path(version))?;
    let vocab = Vocabulary::load(&registry.vocab_path(version))?;
    ops::holdout_accuracy(&weights, test, &vocab)
}

fn decide(ctx: &ActionContext, registry: &Registry, reg: &Registered) -> Result<Decision> {
    let active = registry.active_version()?;
    let mut d = Decision {
        candidate_version: reg.version,
        candidate_accuracy: reg.holdout_accuracy,
        active_version: active,
        active_accuracy: None,
        promote: true,
        reason: String::new(),
    };
    match active {
        None => d.reason = "no active model".into(),
        Some(v) if v == reg.version => d.reason = "candidate is already active".into(),
        Some(v) => {
            let test = read_dataset(&paths(ctx).test)?;
            let acc = active_accuracy(registry, v, &test)?;
            d.active_accuracy = Some(acc);
            d.promote = reg.holdout_accuracy >= acc;
            d.reason = format!(
                "candidate {:.4} {} active {:.4} on this run's holdout",
                reg.holdout_accuracy,
                if d.promote { ">=" } else { "<" },
                acc
            );
        }
    }
    Ok(d)
}

fn promote_if_winner(ctx: &ActionContext) -> Result<Outcome> {
    let reg: Registered = require(&ctx.run_dir.join(REGISTERED), "register_candidate")?;
    let registry = Registry::open(ctx.workspace.registry_dir())?;
    let path = ctx.run_dir.join(DECISION);
    let decision: Decision = if path.is_file() {
        fsutil::read_json(&path)?
    } else {
        let d = decide(ctx, &registry, &reg)?;
        fsutil::write_json(&path, &d)?;
        d
    };
    if !decision.promote {
        return Ok(Outcome::Done(vec![format!("version {} kept as candidate: {}", reg.version, decision.reason)]));
    }
    registry.promote(decision.candidate_version)?;
    Ok(Outcome::Done(vec![format!("version {} promoted: {}", reg.version, decision.reason)]))
}
