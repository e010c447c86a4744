//! Built-in state actions. Each action reads its inputs from and writes its
//! outputs to the run directory, so re-running it is harmless.

mod inference;
mod retraining;

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{PipelineError, Result};
use crate::executor::ActionRegistry;
use crate::fsutil;
use crate::machine::{action_id, INFERENCE_MACHINE, INFERENCE_STATES, RETRAINING_MACHINE, RETRAINING_STATES};

pub use inference::{DriftOutcome, ModelPin, ResultsSummary};
pub use retraining::{Decision, Registered};

/// Every action the built-in machines reference.
pub fn builtin_actions() -> ActionRegistry {
    let mut reg = ActionRegistry::new();
    inference::register(&mut reg);
    retraining::register(&mut reg);
    debug_assert!(INFERENCE_STATES.iter().all(|s| reg.get(&action_id(INFERENCE_MACHINE, s)).is_some()));
    debug_assert!(RETRAINING_STATES.iter().all(|s| reg.get(&action_id(RETRAINING_MACHINE, s)).is_some()));
    reg
}

fn require<T: DeserializeOwned>(path: &Path, produced_by: &str) -> Result<T> {
    if !path.is_file() {
        return Err(PipelineError::NotFound(format!("{} (written by {produced_by})", path.display())));
    }
    fsutil::read_json(path)
}
