use std::collections::BTreeSet;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::fsutil;

pub const MACHINE_FORMAT_VERSION: u32 = 1;
pub const INFERENCE_MACHINE: &str = "inference";
pub const RETRAINING_MACHINE: &str = "retraining";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the first retry; doubles for each further retry.
    pub backoff_seconds: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, backoff_seconds: 2.0 }
    }
}

impl RetryPolicy {
    /// Wait before attempt `attempt` (1-based); zero before the first.
    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt <= 1 {
            return Duration::ZERO;
        }
        Duration::from_secs_f64(self.backoff_seconds * 2f64.powi(attempt as i32 - 2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OnFailure {
    #[default]
    Halt,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDef {
    pub name: String,
    pub action: String,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub on_failure: OnFailure,
}

impl StateDef {
    pub fn new(name: &str, action: &str) -> Self {
        StateDef { name: name.into(), action: action.into(), retry: RetryPolicy::default(), on_failure: OnFailure::Halt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMachineDef {
    pub format_version: u32,
    pub name: String,
    pub states: Vec<StateDef>,
}

impl StateMachineDef {
    pub fn new(name: &str, states: Vec<StateDef>) -> Self {
        StateMachineDef { format_version: MACHINE_FORMAT_VERSION, name: name.into(), states }
    }

    /// Checks structure and that every action id is in `known_actions`.
    pub fn validate(&self, known_actions: &[&str]) -> Result<()> {
        if self.format_version != MACHINE_FORMAT_VERSION {
            return Err(PipelineError::Definition(format!(
                "{}: format_version {} not supported (expected {MACHINE_FORMAT_VERSION})",
                self.name, self.format_version
            )));
        }
        if self.states.is_empty() {
            return Err(PipelineError::Definition(format!("{}: no states", self.name)));
        }
        let mut names = BTreeSet::new();
        for s in &self.states {
            if !names.insert(s.name.as_str()) {
                return Err(PipelineError::Definition(format!("{}: duplicate state {:?}", self.name, s.name)));
            }
            if !known_actions.contains(&s.action.as_str()) {
                return Err(PipelineError::Definition(format!(
                    "{}: state {:?} uses unknown action {:?}",
                    self.name, s.name, s.action
                )));
            }
            if s.retry.max_attempts == 0 || !(s.retry.backoff_seconds >= 0.0) {
                return Err(PipelineError::Definition(format!("{}: state {:?} has an invalid retry policy", self.name, s.name)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str, known_actions: &[&str]) -> Result<Self> {
        let def: StateMachineDef = serde_json::from_str(text)?;
        def.validate(known_actions)?;
        Ok(def)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::atomic_write(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path, known_actions: &[&str]) -> Result<Self> {
        let text = String::from_utf8_lossy(&fsutil::read(path)?).into_owned();
        Self::from_json(&text, known_actions)
    }

    pub fn state_names(&self) -> Vec<&str> {
        self.states.iter().map(|s| s.name.as_str()).collect()
    }
}

pub const INFERENCE_STATES: [&str; 5] = ["validate_input", "preprocess", "load_active_model", "predict", "write_results"];

pub const RETRAINING_STATES: [&str; 8] = [
    "validate_input",
    "preprocess",
    "tune_or_load_config",
    "train_candidates",
    "evaluate",
    "ab_test",
    "register_candidate",
    "promote_if_winner",
];

/// Action ids are qualified by machine because both machines have
/// `validate_input` and `preprocess` states that do different work.
pub fn action_id(machine: &str, state: &str) -> String {
    format!("{machine}.{state}")
}

fn define(machine: &str, states: &[&str]) -> StateMachineDef {
    StateMachineDef::new(machine, states.iter().map(|s| StateDef::new(s, &action_id(machine, s))).collect())
}

pub fn define_inference_machine() -> StateMachineDef {
    define(INFERENCE_MACHINE, &INFERENCE_STATES)
}

pub fn define_retraining_machine() -> StateMachineDef {
    define(RETRAINING_MACHINE, &RETRAINING_STATES)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(machine: &str, states: &[&str]) -> Vec<String> {
        states.iter().map(|s| action_id(machine, s)).collect()
    }

    fn all_ids() -> Vec<String> {
        let mut v = ids(INFERENCE_MACHINE, &INFERENCE_STATES);
        v.extend(ids(RETRAINING_MACHINE, &RETRAINING_STATES));
        v
    }

    fn refs(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }

    #[test]
    fn inference_machine_shape() {
        let m = define_inference_machine();
        assert_eq!(m.state_names(), INFERENCE_STATES);
        assert!(m.states.iter().all(|s| s.retry == RetryPolicy { max_attempts: 3, backoff_seconds: 2.0 }));
        m.validate(&refs(&all_ids())).unwrap();
        assert!(m.validate(&INFERENCE_STATES).is_err());
    }

    #[test]
    fn definitions_round_trip() {
        for m in [define_inference_machine(), define_retraining_machine()] {
            let text = m.to_json().unwrap();
            let back = StateMachineDef::from_json(&text, &refs(&all_ids())).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_json().unwrap(), text);
        }
    }

    #[test]
    fn hand_edited_unknown_action_rejected() {
        let text = define_inference_machine()
            .to_json()
            .unwrap()
            .replace("\"action\": \"inference.predict\"", "\"action\": \"inference.predikt\"");
        let err = StateMachineDef::from_json(&text, &refs(&all_ids())).unwrap_err();
        assert!(err.to_string().contains("predikt"));
    }

    #[test]
    fn structural_errors() {
        let mut m = define_inference_machine();
        let known = all_ids();
        m.states.push(StateDef::new("predict", "inference.predict"));
        assert!(m.validate(&refs(&known)).is_err());
        let empty = StateMachineDef::new("x", vec![]);
        assert!(empty.validate(&refs(&known)).is_err());
        let mut v = define_inference_machine();
        v.format_version = 2;
        assert!(v.validate(&refs(&known)).is_err());
    }

    #[test]
    fn exponential_backoff() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_before(1), Duration::ZERO);
        assert_eq!(p.delay_before(2), Duration::from_secs(2));
        assert_eq!(p.delay_before(3), Duration::from_secs(4));
    }
}
