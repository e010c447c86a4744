//! Hyperparameter files for `train --config`.
//!
//! Either the tagged form written by `tune` (`{"architecture": .., "config": {..}}`)
//! or a flat object of fields. Fields overlay the preset; integer fields
//! accept real numbers and are rounded.

use std::path::Path;

use anyhow::Context;
use hscls_core::models::{Architecture, ArchitectureConfig};
use serde_json::{Map, Value};

use crate::settings::usage;

pub fn load(path: &Path, base: &ArchitectureConfig) -> anyhow::Result<ArchitectureConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    overlay(&v, base).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn overlay(v: &Value, base: &ArchitectureConfig) -> Result<ArchitectureConfig, String> {
    let arch = base.architecture();
    let fields = match v.get("architecture") {
        Some(tag) => {
            let named: Architecture = tag.as_str().unwrap_or("").parse().map_err(|e| format!("{e}"))?;
            if named != arch {
                return Err(format!("file describes {named}, but --model is {arch}"));
            }
            v.get("config").ok_or("tagged config lacks a \"config\" object")?
        }
        None => v,
    };
    let fields = fields.as_object().ok_or("expected a JSON object of hyperparameters")?;

    let base_json = serde_json::to_value(base).expect("configs serialize");
    let mut merged: Map<String, Value> = base_json["config"].as_object().cloned().expect("tagged config");
    for (k, val) in fields {
        let Some(slot) = merged.get(k) else {
            let known: Vec<&String> = merged.keys().collect();
            return Err(format!("unknown {arch} field {k:?} (known: {known:?})"));
        };
        let conformed = conform(slot, val).ok_or_else(|| format!("field {k:?}: {val} does not fit {slot}"))?;
        merged.insert(k.clone(), conformed);
    }
    let tagged = serde_json::json!({ "architecture": arch.as_str(), "config": merged });
    let cfg: ArchitectureConfig = serde_json::from_value(tagged).map_err(|e| e.to_string())?;
    match &cfg {
        ArchitectureConfig::Dnn(c) => c.validate(),
        ArchitectureConfig::TextCnn(c) => c.validate(),
    }
    .map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn round_int(v: &Value) -> Option<Value> {
    let x = v.as_f64()?;
    (x.is_finite() && x >= 0.0).then(|| Value::from(x.round() as u64))
}

/// Shapes `val` like the preset's `slot`: integers are rounded, arrays
/// conform element-wise.
fn conform(slot: &Value, val: &Value) -> Option<Value> {
    match slot {
        Value::Number(n) if n.is_u64() => round_int(val),
        Value::Number(_) => val.as_f64().map(Value::from),
        Value::Array(items) => {
            let proto = items.first()?;
            let arr = match val {
                Value::Array(a) => a.clone(),
                single => vec![single.clone()],
            };
            arr.iter().map(|x| conform(proto, x)).collect::<Option<Vec<_>>>().map(Value::Array)
        }
        _ => Some(val.clone()),
    }
}
