use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::event::{now_rfc3339, Event};
use crate::fsutil;
use crate::machine::StateMachineDef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
    Skipped,
}

impl StateStatus {
    pub fn is_done(&self) -> bool {
        matches!(self, StateStatus::Succeeded | StateStatus::Skipped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, RunStatus::Succeeded | RunStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub name: String,
    pub status: StateStatus,
    pub attempts: u32,
    pub started: Option<String>,
    pub ended: Option<String>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub run_id: String,
    pub machine: String,
    pub event_id: String,
    pub event: Event,
    /// Resolved configuration the run executes under.
    pub config: serde_json::Value,
    pub config_hash: String,
    pub states: Vec<StateRecord>,
    pub status: RunStatus,
    pub created: String,
    pub updated: String,
}

pub const RUN_FILE: &str = "run.json";

/// Run ids are derived from event ids so a re-delivered event maps onto the
/// run it already started.
pub fn run_id_for(event_id: &str) -> String {
    format!("run-{event_id}")
}

impl PipelineRun {
    pub fn new(machine: &StateMachineDef, event: &Event, config: serde_json::Value, config_hash: String) -> Self {
        let now = now_rfc3339();
        PipelineRun {
            run_id: run_id_for(&event.event_id),
            machine: machine.name.clone(),
            event_id: event.event_id.clone(),
            event: event.clone(),
            config,
            config_hash,
            states: machine
                .states
                .iter()
                .map(|s| StateRecord {
                    name: s.name.clone(),
                    status: StateStatus::Pending,
                    attempts: 0,
                    started: None,
                    ended: None,
                    diagnostics: vec![],
                })
                .collect(),
            status: RunStatus::Pending,
            created: now.clone(),
            updated: now,
        }
    }

    /// First state that is neither succeeded nor skipped.
    pub fn resume_index(&self) -> Option<usize> {
        self.states.iter().position(|s| !s.status.is_done())
    }

    pub fn state(&self, name: &str) -> Option<&StateRecord> {
        self.states.iter().find(|s| s.name == name)
    }

    /// Terminal status implied by the state records, if any.
    pub fn derived_status(&self) -> RunStatus {
        if self.states.iter().all(|s| s.status.is_done()) {
            RunStatus::Succeeded
        } else if self.states.iter().any(|s| s.status == StateStatus::Failed) {
            RunStatus::Failed
        } else if self.states.iter().all(|s| s.status == StateStatus::Pending) {
            RunStatus::Pending
        } else {
            RunStatus::Running
        }
    }
}

/// Filesystem store of run records under `runs/<run_id>/run.json`.
#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    pub fn save(&self, run: &mut PipelineRun) -> Result<()> {
        run.updated = now_rfc3339();
        fsutil::write_json(&self.run_dir(&run.run_id).join(RUN_FILE), run)
    }

    pub fn load(&self, run_id: &str) -> Result<PipelineRun> {
        let path = self.run_dir(run_id).join(RUN_FILE);
        if !path.is_file() {
            return Err(PipelineError::NotFound(format!("run {run_id}")));
        }
        fsutil::read_json(&path)
    }

    pub fn exists(&self, run_id: &str) -> bool {
        self.run_dir(run_id).join(RUN_FILE).is_file()
    }

    pub fn list(&self) -> Result<Vec<PipelineRun>> {
        let Ok(entries) = std::fs::read_dir(&self.root) else { return Ok(vec![]) };
        let mut runs = Vec::new();
        for e in entries.flatten() {
            let p = e.path().join(RUN_FILE);
            if p.is_file() {
                runs.push(fsutil::read_json::<PipelineRun>(&p)?);
            }
        }
        runs.sort_by(|a, b| a.created.cmp(&b.created).then_with(|| a.run_id.cmp(&b.run_id)));
        Ok(runs)
    }

    /// Runs left non-terminal by a crash.
    pub fn unfinished(&self) -> Result<Vec<PipelineRun>> {
        Ok(self.list()?.into_iter().filter(|r| !r.status.is_terminal()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{EventKind, EventSource};
    use crate::machine::define_inference_machine;

    #[test]
    fn new_run_is_pending_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let e = Event::new(EventKind::InferenceRequest, Path::new("in.csv"), EventSource::Cli);
        let mut run = PipelineRun::new(&define_inference_machine(), &e, serde_json::json!({}), "h".into());
        assert_eq!(run.run_id, run_id_for(&e.event_id));
        assert_eq!(run.resume_index(), Some(0));
        assert_eq!(run.derived_status(), RunStatus::Pending);
        store.save(&mut run).unwrap();
        assert_eq!(store.load(&run.run_id).unwrap(), run);
        assert_eq!(store.unfinished().unwrap().len(), 1);
        assert!(matches!(store.load("nope"), Err(PipelineError::NotFound(_))));
    }

    #[test]
    fn derived_status_rules() {
        let e = Event::new(EventKind::InferenceRequest, Path::new("in.csv"), EventSource::Cli);
        let mut run = PipelineRun::new(&define_inference_machine(), &e, serde_json::json!({}), "h".into());
        run.states[0].status = StateStatus::Succeeded;
        assert_eq!(run.derived_status(), RunStatus::Running);
        assert_eq!(run.resume_index(), Some(1));
        run.states[1].status = StateStatus::Failed;
        assert_eq!(run.derived_status(), RunStatus::Failed);
        for s in &mut run.states {
            s.status = StateStatus::Succeeded;
        }
        run.states[2].status = StateStatus::Skipped;
        assert_eq!(run.derived_status(), RunStatus::Succeeded);
        assert_eq!(run.resume_index(), None);
    }
}
