use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use hscls_pipeline::executor::{Executor, LocalBackend};
use hscls_pipeline::registry::Registry;
use hscls_pipeline::watcher::PROCESSED_DIR;
use hscls_pipeline::{builtin_actions, fsutil, Event, Orchestrator, PipelineRun, RunStatus, RunStore};

use crate::args::{Cli, PipelineCommand, RegistryCommand};
use crate::settings::{resolve, usage, Resolved};

/// Test hook: exit the process right after this many states complete,
/// as an abrupt kill would.
pub const ENV_CRASH_AFTER: &str = "HSCLS_CRASH_AFTER_STATES";
const CRASH_EXIT_CODE: i32 = 75;

fn executor(r: &Resolved) -> anyhow::Result<Executor> {
    let actions = builtin_actions();
    let machines = r.workspace.load_machines(&actions.ids())?;
    let exec = Executor::new(r.workspace.clone(), r.config.clone(), machines, actions, Arc::new(LocalBackend))?;
    let Some(n) = std::env::var(ENV_CRASH_AFTER).ok().and_then(|v| v.parse::<usize>().ok()) else {
        return Ok(exec);
    };
    let seen = AtomicUsize::new(0);
    Ok(exec.with_hook(Arc::new(move |run: &PipelineRun| {
        if seen.fetch_add(1, Ordering::SeqCst) + 1 >= n {
            eprintln!("{ENV_CRASH_AFTER}: stopping {} after {n} state(s)", run.run_id);
            std::process::exit(CRASH_EXIT_CODE);
        }
        true
    })))
}

fn print_run(run: &PipelineRun) {
    println!("run: {} ({}) {:?}", run.run_id, run.machine, run.status);
    for s in &run.states {
        let last = s.diagnostics.last().map(String::as_str).unwrap_or("");
        println!("  {:<20} {:<10} attempts {}  {last}", s.name, format!("{:?}", s.status), s.attempts);
    }
}

pub fn pipeline(cli: &Cli, cmd: &PipelineCommand) -> anyhow::Result<()> {
    let r = resolve(cli, |_| {})?;
    match cmd {
        PipelineCommand::Start { once } => {
            r.workspace.init()?;
            let orch = Orchestrator::new(executor(&r)?, r.workspace.clone(), Duration::from_millis(r.config.poll_interval_ms));
            if *once {
                let runs = orch.run_until_idle()?;
                runs.iter().for_each(print_run);
                let failed = runs.iter().filter(|r| r.status == RunStatus::Failed).count();
                println!("runs: {}  failed: {failed}", runs.len());
                if failed > 0 {
                    anyhow::bail!("{failed} run(s) failed");
                }
                Ok(())
            } else {
                println!("watching {}", r.root().display());
                orch.start(&AtomicBool::new(false))?;
                Ok(())
            }
        }
        PipelineCommand::Status { run_id } => {
            let run = RunStore::new(r.workspace.runs_dir()).load(run_id)?;
            println!("{}", serde_json::to_string_pretty(&run)?);
            Ok(())
        }
        PipelineCommand::Runs => {
            for run in RunStore::new(r.workspace.runs_dir()).list()? {
                println!("{}  {:<10} {:?}  {}", run.run_id, run.machine, run.status, run.created);
            }
            Ok(())
        }
        PipelineCommand::EmitEvent { event } => {
            r.workspace.init()?;
            let path = Path::new(event);
            let (text, base) = if path.is_file() {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                (text, path.parent().map(Path::to_path_buf).unwrap_or_default())
            } else if event.trim_start().starts_with('{') {
                (event.clone(), std::env::current_dir()?)
            } else {
                return Err(usage(format!("{event:?} is neither an event file nor inline JSON")));
            };
            let mut ev = Event::parse(&text)?;
            if let Some(p) = ev.input().filter(|p| p.is_relative()) {
                let key = ev.kind.input_key();
                let abs = std::path::absolute(base.join(p))?;
                ev.payload.insert(key.into(), serde_json::Value::String(abs.display().to_string()));
            }
            ev.check_dispatchable()?;
            let record = r.workspace.events_dir(ev.kind.machine()).join(PROCESSED_DIR).join(format!("{}.json", ev.event_id));
            fsutil::atomic_write(&record, ev.to_json()?.as_bytes())?;
            let run = executor(&r)?.execute(&ev)?;
            print_run(&run);
            if run.status == RunStatus::Failed {
                anyhow::bail!("run {} failed", run.run_id);
            }
            Ok(())
        }
    }
}

pub fn registry(cli: &Cli, cmd: &RegistryCommand) -> anyhow::Result<()> {
    let r = resolve(cli, |_| {})?;
    let reg = Registry::open(r.workspace.registry_dir())?;
    match cmd {
        RegistryCommand::List => {
            for e in reg.list()? {
                let m = &e.manifest;
                let acc = m.holdout_accuracy.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into());
                let run = m.provenance.run_id.as_deref().unwrap_or("-");
                println!("v{:<4} {:<10} {:<9} acc {acc}  run {run}  {}", m.version, m.architecture.as_str(), format!("{:?}", e.status), m.created);
            }
        }
        RegistryCommand::Promote { version } => {
            let e = reg.promote(*version)?;
            println!("active: {}", e.version());
        }
        RegistryCommand::ShowActive => match reg.active()? {
            Some(e) => println!("{}", e.version()),
            None => anyhow::bail!("no active model in the registry at {}", reg.root().display()),
        },
    }
    Ok(())
}
