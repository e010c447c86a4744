//! Resolves the effective configuration: flags over environment over the
//! workspace `hscls.toml` over built-in defaults.

use std::fmt;
use std::path::{Path, PathBuf};

use hscls_pipeline::{PipelineConfig, PipelineError, Workspace};

use crate::args::{Cli, TrainingFlags};

pub const ENV_WORKSPACE: &str = "HSCLS_WORKSPACE";
pub const ENV_SEED: &str = "HSCLS_SEED";

/// Bad invocation: exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for usage and configuration mistakes, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<PipelineError>() {
        Some(PipelineError::Config(_)) => 2,
        _ => 1,
    }
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub workspace: Workspace,
    pub config: PipelineConfig,
}

impl Resolved {
    pub fn root(&self) -> &Path {
        self.workspace.root()
    }
}

pub fn workspace_root(cli: &Cli) -> PathBuf {
    let root = cli
        .workspace
        .clone()
        .or_else(|| std::env::var_os(ENV_WORKSPACE).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::path::absolute(&root).unwrap_or(root)
}

/// Layers the sources, applies the command's own flags through `apply`, and
/// validates the result before anything runs.
pub fn resolve(cli: &Cli, apply: impl FnOnce(&mut PipelineConfig)) -> anyhow::Result<Resolved> {
    let workspace = Workspace::new(workspace_root(cli));
    let mut config = PipelineConfig::load(workspace.root())?;
    if let Some(v) = std::env::var(ENV_SEED).ok().filter(|v| !v.is_empty()) {
        config.seed = v.trim().parse().map_err(|_| usage(format!("{ENV_SEED}={v:?} is not an unsigned integer")))?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    apply(&mut config);
    config.validate()?;
    println!("seed: {}", config.seed);
    Ok(Resolved { workspace, config })
}

pub fn apply_training(config: &mut PipelineConfig, t: &TrainingFlags) {
    if let Some(v) = t.epochs {
        config.epochs = v;
    }
    if let Some(v) = t.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = t.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = t.max_len {
        config.max_len = v;
    }
    if let Some(v) = t.patience {
        config.patience = v;
    }
    if let Some(v) = t.validation_fraction {
        config.validation_fraction = v;
    }
}
