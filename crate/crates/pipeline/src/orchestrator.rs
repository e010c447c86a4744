//! Ties the watcher to the executor. `start` runs one worker thread per
//! machine so a long retraining run does not hold up inference.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use crate::error::Result;
use crate::event::Event;
use crate::executor::Executor;
use crate::run::{run_id_for, PipelineRun};
use crate::watcher::{processed_events, Watcher};
use crate::workspace::Workspace;

pub struct Orchestrator {
    executor: Arc<Executor>,
    workspace: Workspace,
    watcher: Mutex<Watcher>,
    poll_interval: Duration,
}

impl Orchestrator {
    pub fn new(executor: Executor, workspace: Workspace, poll_interval: Duration) -> Self {
        let watcher = Mutex::new(Watcher::new(&workspace));
        Orchestrator { executor: Arc::new(executor), workspace, watcher, poll_interval }
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    /// Runs one event to a terminal status on the calling thread.
    pub fn dispatch(&self, event: &Event) -> Result<PipelineRun> {
        self.executor.execute(event)
    }

    /// Accepted events whose run is missing or unfinished, oldest first.
    pub fn backlog(&self) -> Result<Vec<Event>> {
        let store = self.executor.store();
        let mut out = Vec::new();
        for e in processed_events(&self.workspace)? {
            let id = run_id_for(&e.event_id);
            if !store.exists(&id) || !store.load(&id)?.status.is_terminal() {
                out.push(e);
            }
        }
        for r in store.unfinished()? {
            if !out.iter().any(|e| e.event_id == r.event_id) {
                out.push(r.event);
            }
        }
        Ok(out)
    }

    fn poll(&self) -> Result<Vec<Event>> {
        self.watcher.lock().expect("watcher lock").poll()
    }

    fn watcher_busy(&self) -> bool {
        self.watcher.lock().expect("watcher lock").has_pending()
    }

    fn run_logged(&self, event: &Event) -> Option<PipelineRun> {
        match self.dispatch(event) {
            Ok(run) => {
                log::info!("{} finished {:?}", run.run_id, run.status);
                Some(run)
            }
            Err(e) => {
                log::error!("event {} could not run: {e}", event.event_id);
                None
            }
        }
    }

    /// Sequentially drains the backlog and the watch directories, including
    /// events the runs themselves emit, until nothing is left.
    pub fn run_until_idle(&self) -> Result<Vec<PipelineRun>> {
        let mut done: BTreeMap<String, PipelineRun> = BTreeMap::new();
        let mut queue = self.backlog()?;
        loop {
            for e in queue.drain(..) {
                if let Some(run) = self.run_logged(&e) {
                    done.insert(run.run_id.clone(), run);
                }
            }
            queue = self.poll()?;
            if queue.is_empty() && self.watcher_busy() {
                thread::sleep(self.poll_interval.min(Duration::from_millis(50)));
                queue = self.poll()?;
            }
            if queue.is_empty() && !self.watcher_busy() {
                break;
            }
        }
        let mut runs: Vec<PipelineRun> = done.into_values().collect();
        runs.sort_by(|a, b| a.created.cmp(&b.created));
        Ok(runs)
    }

    /// Watches until `stop` is set. The backlog is dispatched first, then
    /// new events as they become stable.
    pub fn start(&self, stop: &AtomicBool) -> Result<()> {
        thread::scope(|scope| -> Result<()> {
            let mut senders: BTreeMap<String, mpsc::Sender<Event>> = BTreeMap::new();
            for name in self.machine_names() {
                let (tx, rx) = mpsc::channel::<Event>();
                senders.insert(name.clone(), tx);
                scope.spawn(move || {
                    for e in rx {
                        self.run_logged(&e);
                    }
                    log::debug!("{name} worker stopped");
                });
            }
            let send = |e: Event| match senders.get(e.kind.machine()) {
                Some(tx) => {
                    let _ = tx.send(e);
                }
                None => log::error!("no machine {} for event {}", e.kind.machine(), e.event_id),
            };
            for e in self.backlog()? {
                send(e);
            }
            while !stop.load(Ordering::SeqCst) {
                match self.poll() {
                    Ok(events) => events.into_iter().for_each(send),
                    Err(e) => log::error!("watcher: {e}"),
                }
                thread::sleep(self.poll_interval);
            }
            drop(senders);
            Ok(())
        })
    }

    fn machine_names(&self) -> Vec<String> {
        [crate::machine::INFERENCE_MACHINE, crate::machine::RETRAINING_MACHINE]
            .into_iter()
            .filter(|m| self.executor.machine(m).is_some())
            .map(String::from)
            .collect()
    }
}

