use std::collections::BTreeMap;
use std::path::Path;

use hscls_core::corpus::{read_descriptions, Vocabulary};
use hscls_core::models::load_weights;
use serde::{Deserialize, Serialize};

use super::require;
use crate::drift::{drift_check, DriftReport, Profile};
use crate::error::{PipelineError, Result};
use crate::event::{Event, EventKind, EventSource};
use crate::executor::{ActionContext, ActionRegistry, Outcome};
use crate::fsutil;
use crate::machine::{action_id, INFERENCE_MACHINE, RETRAINING_MACHINE};
use crate::ops;
use crate::registry::Registry;

pub const INPUT: &str = "input.csv";
pub const NORMALIZED: &str = "normalized.csv";
pub const MODEL_PIN: &str = "model.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const DRIFT: &str = "drift.json";
pub const DRIFT_ALERT: &str = "drift_alert.json";
pub const RESULTS: &str = "results.json";

/// The registry version a run is bound to, fixed at load time so a later
/// promotion cannot change the outputs of a resumed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPin {
    pub version: u32,
    pub weights_sha256: String,
    pub vocab_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftOutcome {
    pub report: Option<DriftReport>,
    pub alert_event_id: Option<String>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsSummary {
    pub run_id: String,
    pub model_version: u32,
    pub rows: usize,
    pub predictions: String,
    pub bands: BTreeMap<String, usize>,
    pub drift_triggered: bool,
}

pub(super) fn register(reg: &mut ActionRegistry) {
    let id = |s| action_id(INFERENCE_MACHINE, s);
    reg.insert(&id("validate_input"), validate_input)
        .insert(&id("preprocess"), preprocess)
        .insert(&id("load_active_model"), load_active_model)
        .insert(&id("predict"), predict)
        .insert(&id("write_results"), write_results);
}

fn validate_input(ctx: &ActionContext) -> Result<Outcome> {
    let input = ctx.event.input().ok_or_else(|| PipelineError::InvalidEvent("no input path".into()))?;
    let rows = read_descriptions(&input)?;
    fsutil::atomic_copy(&input, &ctx.run_dir.join(INPUT))?;
    Ok(Outcome::Done(vec![format!("{} rows", rows.len())]))
}

fn preprocess(ctx: &ActionContext) -> Result<Outcome> {
    let rows = read_descriptions(&ctx.run_dir.join(INPUT))?;
    let sw = ops::stopwords();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["record_id", "text"])?;
    for r in &rows {
        w.write_record([r.record_id.as_str(), ops::row_text(r, &sw).as_str()])?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::action("preprocess", e))?;
    fsutil::write_artifact(&ctx.run_dir.join(NORMALIZED), &bytes, &ctx.config.hash())?;
    Ok(Outcome::Done(vec![]))
}

fn read_normalized(path: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| PipelineError::action("read", format!("{}: {e}", path.display())))?;
    let (mut ids, mut texts) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        ids.push(rec.get(0).unwrap_or("").to_string());
        texts.push(rec.get(1).unwrap_or("").to_string());
    }
    Ok((ids, texts))
}

fn load_active_model(ctx: &ActionContext) -> Result<Outcome> {
    let pin_path = ctx.run_dir.join(MODEL_PIN);
    if pin_path.is_file() {
        let pin: ModelPin = fsutil::read_json(&pin_path)?;
        return Ok(Outcome::Done(vec![format!("pinned version {}", pin.version)]));
    }
    let registry = Registry::open(ctx.workspace.registry_dir())?;
    let entry = registry.active()?.ok_or_else(|| PipelineError::Registry("no active model in the registry".into()))?;
    let pin = ModelPin {
        version: entry.version(),
        weights_sha256: entry.manifest.weights_sha256.clone(),
        vocab_hash: entry.manifest.vocab_hash.clone(),
    };
    fsutil::write_json(&pin_path, &pin)?;
    Ok(Outcome::Done(vec![format!("pinned version {}", pin.version)]))
}

fn predict(ctx: &ActionContext) -> Result<Outcome> {
    let pin: ModelPin = require(&ctx.run_dir.join(MODEL_PIN), "load_active_model")?;
    let registry = Registry::open(ctx.workspace.registry_dir())?;
    let wpath = registry.weights_path(pin.version);
    if fsutil::file_digest(&wpath)? != pin.weights_sha256 {
        return Err(PipelineError::Registry(format!("weights of version {} changed since they were pinned", pin.version)));
    }
    let weights = load_weights(&wpath)?;
    let vocab = Vocabulary::load(&registry.vocab_path(pin.version))?;
    let (ids, texts) = read_normalized(&ctx.run_dir.join(NORMALIZED))?;
    let rows = ops::predict_texts(&weights, &vocab, &ids, &texts)?;
    let csv = ops::predictions_csv(&rows)?;
    fsutil::write_artifact(&ctx.run_dir.join(PREDICTIONS), csv.as_bytes(), &ctx.config.hash())?;
    Ok(Outcome::Done(vec![format!("{} predictions with version {}", rows.len(), pin.version)]))
}

fn read_predictions(path: &Path) -> Result<Vec<(String, String)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| PipelineError::action("read", format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push((rec.get(1).unwrap_or("").to_string(), rec.get(3).unwrap_or("").to_string()));
    }
    Ok(out)
}

fn write_results(ctx: &ActionContext) -> Result<Outcome> {
    let pin: ModelPin = require(&ctx.run_dir.join(MODEL_PIN), "load_active_model")?;
    let preds = read_predictions(&ctx.run_dir.join(PREDICTIONS))?;
    let (_, texts) = read_normalized(&ctx.run_dir.join(NORMALIZED))?;
    let mut bands: BTreeMap<String, usize> = ["high", "medium", "low"].iter().map(|b| (b.to_string(), 0)).collect();
    for (_, b) in &preds {
        *bands.entry(b.clone()).or_default() += 1;
    }

    let registry = Registry::open(ctx.workspace.registry_dir())?;
    let ref_path = registry.reference_path(pin.version);
    let drift = if preds.is_empty() {
        DriftOutcome { report: None, alert_event_id: None, note: Some("empty batch; drift not measured".into()) }
    } else if !ref_path.is_file() {
        DriftOutcome { report: None, alert_event_id: None, note: Some(format!("version {} has no reference profile", pin.version)) }
    } else {
        let reference: Profile = fsutil::read_json(&ref_path)?;
        let classes: Vec<String> = preds.iter().map(|(c, _)| c.clone()).collect();
        let live = ops::live_profile(&texts, &classes, ctx.run_id);
        let report = drift_check(&reference, &live, ctx.config.drift_threshold)?;
        if report.triggered && preds.len() < ctx.config.drift_min_rows {
            let note = format!("{} rows is below drift_min_rows {}; no alert", preds.len(), ctx.config.drift_min_rows);
            DriftOutcome { report: Some(report), alert_event_id: None, note: Some(note) }
        } else {
            let alert = if report.triggered { emit_drift_alert(ctx, &registry, pin.version)? } else { None };
            DriftOutcome { report: Some(report), alert_event_id: alert, note: None }
        }
    };
    fsutil::write_json(&ctx.run_dir.join(DRIFT), &drift)?;

    let summary = ResultsSummary {
        run_id: ctx.run_id.to_string(),
        model_version: pin.version,
        rows: preds.len(),
        predictions: PREDICTIONS.into(),
        bands,
        drift_triggered: drift.report.as_ref().is_some_and(|r| r.triggered),
    };
    fsutil::write_json(&ctx.run_dir.join(RESULTS), &summary)?;
    let mut notes = vec![format!("{} rows written", summary.rows)];
    if let Some(id) = &drift.alert_event_id {
        notes.push(format!("drift alert {id} emitted"));
    }
    Ok(Outcome::Done(notes))
}

/// Drops a drift alert into the retraining watch directory. The event id is
/// derived from the run id so a replay re-emits the same event, which the
/// executor then dispatches at most once.
fn emit_drift_alert(ctx: &ActionContext, registry: &Registry, version: u32) -> Result<Option<String>> {
    let marker = ctx.run_dir.join(DRIFT_ALERT);
    if marker.is_file() {
        let e: Event = fsutil::read_json(&marker)?;
        return Ok(Some(e.event_id));
    }
    let entry = registry.get(version)?;
    let Some(data) = entry.manifest.provenance.data_path.clone().filter(|p| Path::new(p).is_file()) else {
        log::warn!("drift detected but version {version} records no training data; no alert emitted");
        return Ok(None);
    };
    let mut event = Event::new(EventKind::DriftAlert, Path::new(&data), EventSource::Monitor);
    event.event_id = format!("drift-{}", ctx.run_id);
    event.payload.insert("source_run".into(), serde_json::Value::String(ctx.run_id.to_string()));
    let dir = ctx.workspace.events_dir(RETRAINING_MACHINE);
    fsutil::atomic_write(&dir.join(format!("{}.json", event.event_id)), event.to_json()?.as_bytes())?;
    fsutil::write_json(&marker, &event)?;
    Ok(Some(event.event_id))
}
