//! Runs state machines against events, persisting the run record after
//! every transition so an interrupted run resumes at its first unfinished
//! state.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};
use crate::event::{now_rfc3339, Event};
use crate::machine::{OnFailure, StateMachineDef};
use crate::run::{run_id_for, PipelineRun, RunStatus, RunStore, StateStatus};
use crate::workspace::Workspace;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// Finished; the notes go into the state's diagnostics.
    Done(Vec<String>),
    Skipped(String),
}

pub struct ActionContext<'a> {
    pub run_id: &'a str,
    pub run_dir: &'a Path,
    pub event: &'a Event,
    pub config: &'a PipelineConfig,
    pub workspace: &'a Workspace,
}

/// A unit of state work. Implementations must be idempotent: running one
/// again after a crash must leave the same outputs.
pub trait Action: Send + Sync {
    fn run(&self, ctx: &ActionContext) -> Result<Outcome>;
}

impl<F> Action for F
where
    F: Fn(&ActionContext) -> Result<Outcome> + Send + Sync,
{
    fn run(&self, ctx: &ActionContext) -> Result<Outcome> {
        self(ctx)
    }
}

#[derive(Clone, Default)]
pub struct ActionRegistry {
    actions: BTreeMap<String, Arc<dyn Action>>,
}

impl ActionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: &str, action: impl Action + 'static) -> &mut Self {
        self.actions.insert(id.to_string(), Arc::new(action));
        self
    }

    pub fn get(&self, id: &str) -> Option<Arc<dyn Action>> {
        self.actions.get(id).cloned()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.actions.keys().map(String::as_str).collect()
    }
}

/// Where actions run and how waiting happens. The local backend runs
/// actions in-process; a remote binding would implement the same trait.
pub trait ExecutionBackend: Send + Sync {
    fn invoke(&self, action: &dyn Action, ctx: &ActionContext) -> Result<Outcome>;
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LocalBackend;

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

impl ExecutionBackend for LocalBackend {
    fn invoke(&self, action: &dyn Action, ctx: &ActionContext) -> Result<Outcome> {
        catch_unwind(AssertUnwindSafe(|| action.run(ctx)))
            .unwrap_or_else(|p| Err(PipelineError::action("action", format!("panicked: {}", panic_message(p)))))
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Called after each state finishes and the record is saved; returning
/// `false` stops the executor on the spot, as a kill would.
pub type TransitionHook = Arc<dyn Fn(&PipelineRun) -> bool + Send + Sync>;

pub struct Executor {
    workspace: Workspace,
    config: PipelineConfig,
    machines: BTreeMap<String, StateMachineDef>,
    actions: ActionRegistry,
    backend: Arc<dyn ExecutionBackend>,
    store: RunStore,
    hook: Option<TransitionHook>,
}

impl Executor {
    pub fn new(
        workspace: Workspace,
        config: PipelineConfig,
        machines: Vec<StateMachineDef>,
        actions: ActionRegistry,
        backend: Arc<dyn ExecutionBackend>,
    ) -> Result<Self> {
        let ids = actions.ids();
        for m in &machines {
            m.validate(&ids)?;
        }
        let store = RunStore::new(workspace.runs_dir());
        Ok(Executor {
            workspace,
            config,
            machines: machines.into_iter().map(|m| (m.name.clone(), m)).collect(),
            actions,
            backend,
            store,
            hook: None,
        })
    }

    pub fn with_hook(mut self, hook: TransitionHook) -> Self {
        self.hook = Some(hook);
        self
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    pub fn machine(&self, name: &str) -> Option<&StateMachineDef> {
        self.machines.get(name)
    }

    /// Runs the event's machine to a terminal status. An event that already
    /// has a run resumes it; a terminal run is returned untouched.
    pub fn execute(&self, event: &Event) -> Result<PipelineRun> {
        let run_id = run_id_for(&event.event_id);
        let mut run = if self.store.exists(&run_id) {
            let run = self.store.load(&run_id)?;
            if run.status.is_terminal() {
                return Ok(run);
            }
            log::info!("resuming {run_id} at state {:?}", run.resume_index());
            run
        } else {
            event.check_dispatchable()?;
            let machine = self.machine_for(event)?;
            let config = serde_json::to_value(&self.config)?;
            let mut run = PipelineRun::new(machine, event, config, self.config.hash());
            self.store.save(&mut run)?;
            run
        };
        let machine = self
            .machines
            .get(&run.machine)
            .ok_or_else(|| PipelineError::Definition(format!("run {run_id} uses unknown machine {}", run.machine)))?
            .clone();
        if machine.state_names() != run.states.iter().map(|s| s.name.as_str()).collect::<Vec<_>>() {
            return Err(PipelineError::Definition(format!(
                "run {run_id} was created with a different {} definition",
                machine.name
            )));
        }
        // A resumed run keeps the configuration it started with.
        let config: PipelineConfig = serde_json::from_value(run.config.clone())?;
        let run_dir = self.store.run_dir(&run_id);
        let event = run.event.clone();
        let ctx = ActionContext { run_id: &run_id, run_dir: &run_dir, event: &event, config: &config, workspace: &self.workspace };

        run.status = RunStatus::Running;
        while let Some(i) = run.resume_index() {
            let def = &machine.states[i];
            if run.states[i].status == StateStatus::Failed {
                break;
            }
            if run.states[i].status == StateStatus::Running {
                run.states[i].attempts = 0;
                run.states[i].diagnostics.push("resumed after interruption".into());
            }
            let action = self
                .actions
                .get(&def.action)
                .ok_or_else(|| PipelineError::Definition(format!("unknown action {}", def.action)))?;
            run.states[i].status = StateStatus::Running;
            run.states[i].started = Some(now_rfc3339());
            self.store.save(&mut run)?;

            let outcome = loop {
                let attempt = run.states[i].attempts + 1;
                self.backend.sleep(def.retry.delay_before(attempt));
                run.states[i].attempts = attempt;
                match self.backend.invoke(action.as_ref(), &ctx) {
                    Ok(o) => break Ok(o),
                    Err(e) => {
                        log::warn!("{run_id} {} attempt {attempt} failed: {e}", def.name);
                        run.states[i].diagnostics.push(format!("attempt {attempt}: {e}"));
                        if attempt >= def.retry.max_attempts {
                            break Err(e);
                        }
                        self.store.save(&mut run)?;
                    }
                }
            };
            let rec = &mut run.states[i];
            rec.ended = Some(now_rfc3339());
            match outcome {
                Ok(Outcome::Done(notes)) => {
                    rec.status = StateStatus::Succeeded;
                    rec.diagnostics.extend(notes);
                }
                Ok(Outcome::Skipped(why)) => {
                    rec.status = StateStatus::Skipped;
                    rec.diagnostics.push(why);
                }
                Err(_) if def.on_failure == OnFailure::Skip => {
                    rec.status = StateStatus::Skipped;
                    rec.diagnostics.push("retries exhausted; skipped per on_failure".into());
                }
                Err(_) => {
                    rec.status = StateStatus::Failed;
                }
            }
            run.status = match run.derived_status() {
                RunStatus::Failed => RunStatus::Failed,
                RunStatus::Succeeded => RunStatus::Succeeded,
                _ => RunStatus::Running,
            };
            self.store.save(&mut run)?;
            log::info!("{run_id} {} -> {:?}", def.name, run.states[i].status);
            if let Some(h) = &self.hook {
                if !h(&run) {
                    return Err(PipelineError::Interrupted(run_id));
                }
            }
            if run.status == RunStatus::Failed {
                break;
            }
        }
        run.status = run.derived_status();
        self.store.save(&mut run)?;
        Ok(run)
    }

    fn machine_for(&self, event: &Event) -> Result<&StateMachineDef> {
        let name = event.kind.machine();
        self.machines.get(name).ok_or_else(|| PipelineError::Definition(format!("no {name} machine loaded for {}", event.kind)))
    }

    /// Runs left unfinished by an earlier process, oldest first.
    pub fn unfinished(&self) -> Result<Vec<PipelineRun>> {
        self.store.unfinished()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{EventKind, EventSource};
    use crate::machine::{RetryPolicy, StateDef};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    #[derive(Default)]
    struct NoSleep(Mutex<Vec<Duration>>);

    impl ExecutionBackend for NoSleep {
        fn invoke(&self, action: &dyn Action, ctx: &ActionContext) -> Result<Outcome> {
            LocalBackend.invoke(action, ctx)
        }
        fn sleep(&self, d: Duration) {
            self.0.lock().unwrap().push(d);
        }
    }

    fn machine(names: &[&str]) -> StateMachineDef {
        StateMachineDef::new("inference", names.iter().map(|n| StateDef::new(n, n)).collect())
    }

    fn setup(dir: &Path) -> (Workspace, Event) {
        let ws = Workspace::new(dir);
        let input = dir.join("in.csv");
        std::fs::write(&input, "x").unwrap();
        (ws, Event::new(EventKind::InferenceRequest, &input, EventSource::Cli))
    }

    fn ok(_: &ActionContext) -> Result<Outcome> {
        Ok(Outcome::Done(vec![]))
    }

    #[test]
    fn all_succeed() {
        let dir = tempfile::tempdir().unwrap();
        let (ws, ev) = setup(dir.path());
        let mut acts = ActionRegistry::new();
        for n in ["a", "b", "c", "d", "e"] {
            acts.insert(n, ok);
        }
        let ex = Executor::new(ws, PipelineConfig::default(), vec![machine(&["a", "b", "c", "d", "e"])], acts, Arc::new(NoSleep::default()))
            .unwrap();
        let run = ex.execute(&ev).unwrap();
        assert_eq!(run.status, RunStatus::Succeeded);
        assert_eq!(run.states.len(), 5);
        assert!(run.states.iter().all(|s| s.status == StateStatus::Succeeded && s.attempts == 1));
        assert_eq!(ex.store().load(&run.run_id).unwrap().status, RunStatus::Succeeded);
        assert_eq!(run.event_id, ev.event_id);
    }

    #[test]
    fn retries_then_succeeds_with_backoff() {
        let dir = tempfile::tempdir().unwrap();
        let (ws, ev) = setup(dir.path());
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let mut acts = ActionRegistry::new();
        acts.insert("flaky", move |_: &ActionContext| {
            if c.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(PipelineError::action("flaky", "transient"))
            } else {
                Ok(Outcome::Done(vec![]))
            }
        });
        let backend = Arc::new(NoSleep::default());
        let ex = Executor::new(ws, PipelineConfig::default(), vec![machine(&["flaky"])], acts, backend.clone()).unwrap();
        let run = ex.execute(&ev).unwrap();
        assert_eq!(run.status, RunStatus::Succeeded);
        assert_eq!(run.states[0].attempts, 3);
        assert_eq!(run.states[0].diagnostics.len(), 2);
        let waits: Vec<_> = backend.0.lock().unwrap().iter().copied().filter(|d| !d.is_zero()).collect();
        assert_eq!(waits, [Duration::from_secs(2), Duration::from_secs(4)]);
    }

    #[test]
    fn halt_leaves_later_states_pending_and_skip_continues() {
        let dir = tempfile::tempdir().unwrap();
        let (ws, ev) = setup(dir.path());
        let mut acts = ActionRegistry::new();
        acts.insert("ok", ok).insert("bad", |_: &ActionContext| -> Result<Outcome> { panic!("boom") });
        let mut m = machine(&["ok", "bad", "ok2"]);
        m.states[2].action = "ok".into();
        m.states[1].retry = RetryPolicy { max_attempts: 2, backoff_seconds: 0.0 };
        let ex = Executor::new(ws.clone(), PipelineConfig::default(), vec![m.clone()], acts.clone(), Arc::new(NoSleep::default())).unwrap();
        let run = ex.execute(&ev).unwrap();
        assert_eq!(run.status, RunStatus::Failed);
        let st: Vec<_> = run.states.iter().map(|s| s.status).collect();
        assert_eq!(st, [StateStatus::Succeeded, StateStatus::Failed, StateStatus::Pending]);
        assert!(run.states[1].diagnostics[0].contains("boom"));
        // terminal runs are not re-dispatched
        assert_eq!(ex.execute(&ev).unwrap().states, run.states);

        m.states[1].on_failure = OnFailure::Skip;
        let (_, ev2) = setup(dir.path());
        let ex = Executor::new(ws, PipelineConfig::default(), vec![m], acts, Arc::new(NoSleep::default())).unwrap();
        let run = ex.execute(&ev2).unwrap();
        assert_eq!(run.status, RunStatus::Succeeded);
        assert_eq!(run.states[1].status, StateStatus::Skipped);
        assert_eq!(run.states[2].status, StateStatus::Succeeded);
    }

    #[test]
    fn interrupted_run_resumes_at_first_unfinished_state() {
        let dir = tempfile::tempdir().unwrap();
        let (ws, ev) = setup(dir.path());
        let calls = Arc::new(Mutex::new(Vec::<String>::new()));
        let mut acts = ActionRegistry::new();
        for n in ["a", "b", "c"] {
            let c = calls.clone();
            let name = n.to_string();
            acts.insert(n, move |_: &ActionContext| {
                c.lock().unwrap().push(name.clone());
                Ok(Outcome::Done(vec![]))
            });
        }
        let m = machine(&["a", "b", "c"]);
        let stop_after_first: TransitionHook = Arc::new(|r: &PipelineRun| r.states[0].status != StateStatus::Succeeded);
        let ex = Executor::new(ws.clone(), PipelineConfig::default(), vec![m.clone()], acts.clone(), Arc::new(NoSleep::default()))
            .unwrap()
            .with_hook(stop_after_first);
        assert!(matches!(ex.execute(&ev), Err(PipelineError::Interrupted(_))));
        assert_eq!(ex.unfinished().unwrap().len(), 1);

        let ex = Executor::new(ws, PipelineConfig::default(), vec![m], acts, Arc::new(NoSleep::default())).unwrap();
        let run = ex.execute(&ev).unwrap();
        assert_eq!(run.status, RunStatus::Succeeded);
        assert_eq!(*calls.lock().unwrap(), ["a", "b", "c"]);
        assert!(ex.unfinished().unwrap().is_empty());
    }

    #[test]
    fn missing_input_and_unknown_action_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path());
        let ev = Event::new(EventKind::InferenceRequest, &dir.path().join("missing.csv"), EventSource::Cli);
        let mut acts = ActionRegistry::new();
        acts.insert("a", ok);
        let ex = Executor::new(ws.clone(), PipelineConfig::default(), vec![machine(&["a"])], acts.clone(), Arc::new(LocalBackend)).unwrap();
        assert!(matches!(ex.execute(&ev), Err(PipelineError::InvalidEvent(_))));
        assert!(Executor::new(ws, PipelineConfig::default(), vec![machine(&["zz"])], acts, Arc::new(LocalBackend)).is_err());
    }
}
