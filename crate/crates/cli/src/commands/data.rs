use std::path::PathBuf;

use hscls_core::corpus::read_dataset;
use hscls_core::corpus::synthetic::{generate, SyntheticSpec};
use hscls_pipeline::config::CONFIG_FILE;
use hscls_pipeline::{fsutil, ops, PipelineConfig};

use crate::args::{Cli, PrepareArgs, SynthArgs};
use crate::settings::{resolve, workspace_root};

pub fn init(cli: &Cli) -> anyhow::Result<()> {
    let r = resolve(cli, |_| {})?;
    r.workspace.init()?;
    let cfg_path = r.root().join(CONFIG_FILE);
    if !cfg_path.is_file() {
        fsutil::atomic_write(&cfg_path, PipelineConfig::default().to_toml()?.as_bytes())?;
    }
    println!("workspace: {}", r.root().display());
    Ok(())
}

pub fn synth(cli: &Cli, a: &SynthArgs) -> anyhow::Result<()> {
    let r = resolve(cli, |_| {})?;
    let spec = SyntheticSpec {
        classes: a.classes,
        per_class: a.per_class,
        noise_fraction: a.noise_fraction,
        low_assurance_fraction: a.low_assurance_fraction,
        seed: r.config.seed,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec)?;
    ops::write_dataset_artifact(&a.out, &data, &fsutil::config_hash(&spec))?;
    println!("rows: {}", data.len());
    println!("wrote: {}", a.out.display());
    Ok(())
}

pub fn prepare(cli: &Cli, a: &PrepareArgs) -> anyhow::Result<()> {
    let r = resolve(cli, |c| {
        if let Some(v) = a.min_assurance {
            c.min_assurance = v;
        }
        if let Some(v) = a.test_fraction {
            c.test_fraction = v;
        }
        if let Some(v) = a.upsample {
            c.upsample = v.into();
        }
        if let Some(v) = a.vocab_size {
            c.vocab_size = v;
        }
    })?;
    let data = read_dataset(&a.input)?;
    let prepared = ops::prepare(&data, &r.config)?;
    let out = a.out.clone().unwrap_or_else(|| workspace_root(cli).join("prepared"));
    let paths = ops::write_prepared(&out, &prepared)?;

    let rep = &prepared.report;
    println!("input rows: {}  dropped by assurance: {}", rep.input_rows, rep.dropped_by_assurance);
    println!("train rows: {} (+{} upsampled)  test rows: {}", rep.train_rows, rep.upsampled_added, rep.test_rows);
    println!("vocabulary: {} tokens", rep.vocab_size);
    println!("{:<10} {:>7} {:>8} {:>7} {:>6} {:>10} {:>6}", "class", "input", "filtered", "train", "test", "upsampled", "delta");
    for c in &rep.classes {
        println!(
            "{:<10} {:>7} {:>8} {:>7} {:>6} {:>10} {:>+6}",
            c.class, c.input, c.filtered, c.train, c.test, c.train_upsampled, c.delta
        );
    }
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    for p in [&paths.train, &paths.test, &paths.vocab, &paths.report] {
        println!("wrote: {}", p.display());
    }
    Ok(())
}

/// `vocab.txt` beside `file` unless given explicitly.
pub fn sibling_vocab(explicit: &Option<PathBuf>, file: &std::path::Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| file.with_file_name("vocab.txt"))
}
