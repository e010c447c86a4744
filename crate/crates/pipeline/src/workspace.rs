use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::fsutil;
use crate::machine::{define_inference_machine, define_retraining_machine, StateMachineDef};

/// Directory layout of one deployment:
/// `events/{inference,retraining}/`, `runs/<run_id>/`, `registry/`,
/// `machines/<name>.json`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn events_dir(&self, machine: &str) -> PathBuf {
        self.root.join("events").join(machine)
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn registry_dir(&self) -> PathBuf {
        self.root.join("registry")
    }

    pub fn machines_dir(&self) -> PathBuf {
        self.root.join("machines")
    }

    pub fn machine_path(&self, name: &str) -> PathBuf {
        self.machines_dir().join(format!("{name}.json"))
    }

    /// Creates the directories and writes the default machine definitions
    /// unless edited copies already exist.
    pub fn init(&self) -> Result<()> {
        for m in [define_inference_machine(), define_retraining_machine()] {
            fsutil::ensure_dir(&self.events_dir(&m.name))?;
            let p = self.machine_path(&m.name);
            if !p.is_file() {
                m.save(&p)?;
            }
        }
        fsutil::ensure_dir(&self.runs_dir())?;
        fsutil::ensure_dir(&self.registry_dir())
    }

    /// Machine definitions from `machines/`, falling back to the built-ins.
    pub fn load_machines(&self, known_actions: &[&str]) -> Result<Vec<StateMachineDef>> {
        [define_inference_machine(), define_retraining_machine()]
            .into_iter()
            .map(|m| {
                let p = self.machine_path(&m.name);
                if p.is_file() {
                    StateMachineDef::load(&p, known_actions)
                } else {
                    Ok(m)
                }
            })
            .collect()
    }
}
