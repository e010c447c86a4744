use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use hscls_core::corpus::{read_dataset, read_descriptions, Vocabulary};
use hscls_core::models::{dnn_layer_plan, load_weights, save_weights, Architecture, ArchitectureConfig};
use hscls_core::TOOL_VERSION;
use hscls_pipeline::registry::Registry;
use hscls_pipeline::{fsutil, ops};
use serde_json::json;

use super::data::sibling_vocab;
use crate::archconfig;
use crate::args::{AbtestArgs, Cli, EvaluateArgs, InferArgs, TrainArgs, TuneArgs};
use crate::settings::{apply_training, resolve, usage, workspace_root};

fn load_vocab(path: &Path) -> anyhow::Result<Vocabulary> {
    Vocabulary::load(path).with_context(|| format!("vocabulary {}", path.display()))
}

fn describe(config: &ArchitectureConfig) -> String {
    match config {
        ArchitectureConfig::Dnn(c) => format!(
            "dnn: embedding {} -> hidden layers {:?} (dropout {})",
            c.embedding_dim,
            dnn_layer_plan(c),
            c.dropout
        ),
        ArchitectureConfig::TextCnn(c) => format!(
            "text_cnn: embedding {} -> kernels {:?} x {} filters, {} block(s), dropout {}",
            c.embedding_dim, c.kernel_sizes, c.filters_per_kernel, c.n_conv_blocks, c.dropout
        ),
    }
}

pub fn train(cli: &Cli, a: &TrainArgs) -> anyhow::Result<()> {
    let arch: Architecture = a.model.into();
    let r = resolve(cli, |c| {
        apply_training(c, &a.training);
        if let Some(p) = &a.preset {
            match arch {
                Architecture::Dnn => c.dnn_preset = p.clone(),
                Architecture::TextCnn => c.text_cnn_preset = p.clone(),
            }
        }
    })?;
    let mut config = r.config.preset_config(arch)?;
    if let Some(path) = &a.config {
        config = archconfig::load(path, &config)?;
    }
    println!("layer plan: {}", describe(&config));

    let data = read_dataset(&a.train)?;
    let vocab_path = sibling_vocab(&a.vocab, &a.train);
    let vocab = load_vocab(&vocab_path)?;
    let trained = ops::train_model(&config, &data, &vocab, &r.config, &format!("train.{arch}"))?;

    let out = a.out.clone().unwrap_or_else(|| workspace_root(cli).join("models").join(arch.as_str()));
    let weights_path = out.join("weights.bin");
    let h = r.config.hash();
    fsutil::atomic_write_with(&weights_path, |tmp| Ok(save_weights(&trained.weights, tmp)?))?;
    fsutil::write_meta(&weights_path, &h)?;
    fsutil::write_artifact(&out.join("history.csv"), trained.history.to_csv().as_bytes(), &h)?;
    fsutil::atomic_copy(&vocab_path, &out.join("vocab.txt"))?;
    let digest = fsutil::file_digest(&weights_path)?;
    let report = json!({
        "tool_version": TOOL_VERSION,
        "config_hash": h,
        "seed": r.config.seed,
        "model": config,
        "layer_plan": describe(&config),
        "epochs_run": trained.history.epochs.len(),
        "best_epoch": trained.history.best_epoch,
        "stopped_early": trained.history.stopped_early,
        "fit_rows": trained.fit_rows,
        "validation_rows": trained.validation_rows,
        "weights_sha256": digest,
    });
    fsutil::write_json(&out.join("train_report.json"), &report)?;
    if let Some(last) = trained.history.epochs.last() {
        println!("epochs: {} (best {})  final loss: {:.6}", trained.history.epochs.len(), trained.history.best_epoch, last.train_loss);
    }
    println!("weights sha256: {digest}");
    println!("wrote: {}", weights_path.display());
    Ok(())
}

pub fn tune(cli: &Cli, a: &TuneArgs) -> anyhow::Result<()> {
    let arch: Architecture = a.model.into();
    let r = resolve(cli, |c| {
        apply_training(c, &a.training);
        if let Some(v) = a.trial_epochs {
            c.tune_epochs = v;
        }
    })?;
    let budget = a.budget.unwrap_or(r.config.tune_budget);
    let n_init = a.n_init.unwrap_or(r.config.tune_n_init);
    if n_init < 2 || budget < n_init {
        return Err(usage(format!("need 2 <= --n-init <= --budget (got n_init {n_init}, budget {budget})")));
    }
    let data = read_dataset(&a.train)?;
    let vocab = load_vocab(&sibling_vocab(&a.vocab, &a.train))?;
    let tuned = ops::tune_model(arch, &data, &vocab, &r.config, budget, n_init)?;

    let out = a.out.clone().unwrap_or_else(|| workspace_root(cli).join("tuning").join(arch.as_str()));
    let h = r.config.hash();
    let mut best = serde_json::to_value(&tuned.config)?;
    let obj = best.as_object_mut().expect("tagged config");
    obj.insert("objective".into(), json!(tuned.result.best.objective));
    obj.insert("point".into(), json!(tuned.result.best.point));
    obj.insert("trials".into(), json!(tuned.result.history.len()));
    obj.insert("seed".into(), json!(r.config.seed));
    obj.insert("tool_version".into(), json!(TOOL_VERSION));
    obj.insert("config_hash".into(), json!(h));
    fsutil::write_json(&out.join("best_config.json"), &best)?;
    fsutil::write_artifact(&out.join("tune_history.csv"), tuned.result.history_csv(&tuned.space)?.as_bytes(), &h)?;
    println!("best: {}", describe(&tuned.config));
    if let Some(v) = tuned.result.best.objective {
        println!("best validation accuracy: {v:.4}");
    }
    println!("wrote: {}", out.join("best_config.json").display());
    Ok(())
}

pub fn evaluate(cli: &Cli, a: &EvaluateArgs) -> anyhow::Result<()> {
    let r = resolve(cli, |c| {
        if let Some(b) = a.beta {
            c.ab_beta = b;
        }
    })?;
    let weights = load_weights(&a.weights)?;
    let vocab = load_vocab(&sibling_vocab(&a.vocab, &a.weights))?;
    let data = read_dataset(&a.data)?;
    let report = ops::evaluate(&weights, &data, &vocab, r.config.ab_beta)?;
    let out = a.out.clone().unwrap_or_else(|| a.weights.parent().map(Path::to_path_buf).unwrap_or_default());
    let h = r.config.hash();
    fsutil::write_json(&out.join("eval.json"), &report)?;
    fsutil::write_artifact(&out.join("eval_metrics.csv"), report.metrics_csv()?.as_bytes(), &h)?;
    fsutil::write_artifact(&out.join("eval_bands.csv"), report.bands.to_csv().as_bytes(), &h)?;
    println!("accuracy: {:.6}", report.accuracy);
    print!("{}", report.bands.to_csv());
    println!("wrote: {}", out.join("eval.json").display());
    Ok(())
}

pub fn abtest(cli: &Cli, a: &AbtestArgs) -> anyhow::Result<()> {
    let archs: Vec<Architecture> = a.models.iter().map(|&m| m.into()).collect();
    if archs.iter().collect::<BTreeSet<_>>().len() < 2 {
        return Err(usage("--models needs at least two distinct models"));
    }
    let r = resolve(cli, |c| {
        apply_training(c, &a.training);
        c.models = archs.clone();
        if let Some(v) = a.k {
            c.ab_k = v;
        }
        if let Some(v) = a.metric {
            c.ab_metric = v.into();
        }
        if let Some(v) = a.alpha {
            c.ab_alpha = v;
        }
        if let Some(v) = a.beta {
            c.ab_beta = v;
        }
    })?;
    let models: Vec<(String, ArchitectureConfig)> =
        archs.iter().map(|&m| Ok((m.to_string(), r.config.preset_config(m)?))).collect::<anyhow::Result<_>>()?;
    let data = read_dataset(&a.data)?;
    let vocab = load_vocab(&sibling_vocab(&a.vocab, &a.data))?;
    let report = ops::run_abtest(&data, &vocab, &models, &r.config)?;

    let out = a.out.clone().unwrap_or_else(|| workspace_root(cli).join("abtest"));
    let h = r.config.hash();
    fsutil::write_artifact(&out.join("ab_report.csv"), report.to_csv()?.as_bytes(), &h)?;
    let stamp = json!({ "tool_version": TOOL_VERSION, "config_hash": h, "seed": r.config.seed, "k": r.config.ab_k });
    fsutil::write_json(&out.join("ab_report.json"), &json!({ "run": stamp, "report": report }))?;
    fsutil::write_json(&out.join("verdict.json"), &json!({ "run": stamp, "verdict": report.verdict }))?;
    let v = &report.verdict;
    for c in &v.classes {
        println!("{}: {}{}", c.class, c.winner, if c.significant { " (significant)" } else { "" });
    }
    println!("class wins: {:?}", v.class_wins);
    println!("overall winner: {}", v.overall_winner);
    println!("wrote: {}", out.join("verdict.json").display());
    Ok(())
}

pub fn infer(cli: &Cli, a: &InferArgs) -> anyhow::Result<()> {
    let r = resolve(cli, |_| {})?;
    let (weights_path, vocab_path): (PathBuf, PathBuf) = match &a.weights {
        Some(w) => (w.clone(), sibling_vocab(&a.vocab, w)),
        None => {
            let reg = Registry::open(r.workspace.registry_dir())?;
            let entry = reg.active()?.ok_or_else(|| anyhow::anyhow!("no active model in the registry at {}", reg.root().display()))?;
            println!("model version: {}", entry.version());
            (reg.weights_path(entry.version()), reg.vocab_path(entry.version()))
        }
    };
    let weights = load_weights(&weights_path)?;
    let vocab = load_vocab(&vocab_path)?;
    let rows = read_descriptions(&a.input)?;
    let preds = ops::predict_rows(&weights, &vocab, &rows)?;
    let out = a.out.clone().unwrap_or_else(|| a.input.with_file_name("predictions.csv"));
    fsutil::write_artifact(&out, ops::predictions_csv(&preds)?.as_bytes(), &r.config.hash())?;
    println!("rows: {}", preds.len());
    println!("wrote: {}", out.display());
    Ok(())
}
