//! Polls the event directories. A file is picked up once its size has been
//! the same on two consecutive polls, so half-written drops are left alone.
//!
//! Accepted events are written to `processed/<event_id>.json` before they
//! are dispatched; a restart dispatches any of those that never got a run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use crate::error::{PipelineError, Result};
use crate::event::{Event, EventKind, EventSource};
use crate::fsutil;
use crate::machine::{INFERENCE_MACHINE, RETRAINING_MACHINE};
use crate::workspace::Workspace;

pub const PROCESSED_DIR: &str = "processed";
pub const REJECTED_DIR: &str = "rejected";

#[derive(Debug)]
struct WatchDir {
    dir: PathBuf,
    /// Kind given to bare data files dropped here.
    kind: EventKind,
}

#[derive(Debug)]
pub struct Watcher {
    dirs: Vec<WatchDir>,
    sizes: BTreeMap<PathBuf, u64>,
}

impl Watcher {
    pub fn new(workspace: &Workspace) -> Self {
        let dirs = vec![
            WatchDir { dir: workspace.events_dir(INFERENCE_MACHINE), kind: EventKind::InferenceRequest },
            WatchDir { dir: workspace.events_dir(RETRAINING_MACHINE), kind: EventKind::RetrainingRequest },
        ];
        Watcher { dirs, sizes: BTreeMap::new() }
    }

    /// True while some file has been seen but not yet judged stable.
    pub fn has_pending(&self) -> bool {
        !self.sizes.is_empty()
    }

    /// Accepts every stable file, oldest first, and returns the new events.
    pub fn poll(&mut self) -> Result<Vec<Event>> {
        let mut seen = BTreeMap::new();
        let mut ready: Vec<(SystemTime, PathBuf, EventKind)> = Vec::new();
        for wd in &self.dirs {
            let Ok(entries) = fs::read_dir(&wd.dir) else { continue };
            for e in entries.flatten() {
                let path = e.path();
                let Ok(meta) = e.metadata() else { continue };
                if !meta.is_file() || is_ignored(&path) {
                    continue;
                }
                let size = meta.len();
                if self.sizes.get(&path) == Some(&size) {
                    ready.push((meta.modified().unwrap_or(SystemTime::UNIX_EPOCH), path, wd.kind));
                } else {
                    seen.insert(path, size);
                }
            }
        }
        self.sizes = seen;
        ready.sort();
        let mut events = Vec::new();
        for (_, path, kind) in ready {
            match accept(&path, kind) {
                Ok(e) => events.push(e),
                Err(err) => {
                    log::warn!("rejected {}: {err}", path.display());
                    reject(&path, &err.to_string())?;
                }
            }
        }
        Ok(events)
    }
}

fn is_ignored(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.starts_with('.') || name.ends_with(".tmp") || name.ends_with('~')
}

fn accept(path: &Path, kind: EventKind) -> Result<Event> {
    let dir = path.parent().expect("watched file has a parent");
    let processed = dir.join(PROCESSED_DIR);
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "json" => {
            let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
            let mut event = Event::parse(&text)?;
            let key = event.kind.input_key();
            if let Some(p) = event.input().filter(|p| p.is_relative()) {
                let abs = std::path::absolute(dir.join(p)).map_err(|e| PipelineError::io(dir, e))?;
                event.payload.insert(key.into(), serde_json::Value::String(abs.display().to_string()));
            }
            event.check_dispatchable()?;
            let record = processed.join(format!("{}.json", event.event_id));
            fsutil::atomic_write(&record, event.to_json()?.as_bytes())?;
            fs::remove_file(path).map_err(|e| PipelineError::io(path, e))?;
            Ok(event)
        }
        "csv" => {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("data.csv");
            let mut event = Event::new(kind, path, EventSource::WatchDir);
            let moved = std::path::absolute(processed.join(format!("{}-{name}", event.event_id)))
                .map_err(|e| PipelineError::io(&processed, e))?;
            fsutil::ensure_dir(&processed)?;
            fs::rename(path, &moved).map_err(|e| PipelineError::io(path, e))?;
            event.payload.insert(kind.input_key().into(), serde_json::Value::String(moved.display().to_string()));
            fsutil::atomic_write(&processed.join(format!("{}.json", event.event_id)), event.to_json()?.as_bytes())?;
            Ok(event)
        }
        other => Err(PipelineError::InvalidEvent(format!("unsupported file type {other:?}; expected .json or .csv"))),
    }
}

fn reject(path: &Path, reason: &str) -> Result<()> {
    let dir = path.parent().expect("watched file has a parent").join(REJECTED_DIR);
    fsutil::ensure_dir(&dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("event");
    let dest = dir.join(name);
    fs::rename(path, &dest).map_err(|e| PipelineError::io(path, e))?;
    fsutil::atomic_write(&dir.join(format!("{name}.reason.txt")), format!("{reason}\n").as_bytes())
}

/// Accepted events, across both machines, oldest first.
pub fn processed_events(workspace: &Workspace) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    for m in [INFERENCE_MACHINE, RETRAINING_MACHINE] {
        let dir = workspace.events_dir(m).join(PROCESSED_DIR);
        let Ok(entries) = fs::read_dir(&dir) else { continue };
        for e in entries.flatten() {
            let p = e.path();
            if p.extension().is_some_and(|x| x == "json") && !is_ignored(&p) {
                let text = fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
                match Event::parse(&text) {
                    Ok(ev) => out.push(ev),
                    Err(err) => log::warn!("skipping unreadable event {}: {err}", p.display()),
                }
            }
        }
    }
    out.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.event_id.cmp(&b.event_id)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (tempfile::TempDir, Workspace) {
        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::new(tmp.path());
        ws.init().unwrap();
        (tmp, ws)
    }

    #[test]
    fn file_needs_two_stable_polls() {
        let (_t, ws) = setup();
        let mut w = Watcher::new(&ws);
        let f = ws.events_dir(INFERENCE_MACHINE).join("batch.csv");
        fs::write(&f, "record_id,short_description,medium_description\n1,a,b\n").unwrap();
        assert!(w.poll().unwrap().is_empty());
        assert!(w.has_pending());
        let evs = w.poll().unwrap();
        assert_eq!(evs.len(), 1);
        assert_eq!(evs[0].kind, EventKind::InferenceRequest);
        assert!(!f.exists());
        assert!(evs[0].input().unwrap().is_file());
        assert_eq!(processed_events(&ws).unwrap(), evs);
    }

    #[test]
    fn growing_file_is_left_alone() {
        let (_t, ws) = setup();
        let mut w = Watcher::new(&ws);
        let f = ws.events_dir(RETRAINING_MACHINE).join("data.csv");
        fs::write(&f, "x").unwrap();
        w.poll().unwrap();
        fs::write(&f, "xy").unwrap();
        assert!(w.poll().unwrap().is_empty());
        assert_eq!(w.poll().unwrap().len(), 1);
    }

    #[test]
    fn bad_files_are_rejected_with_reason() {
        let (_t, ws) = setup();
        let mut w = Watcher::new(&ws);
        let dir = ws.events_dir(INFERENCE_MACHINE);
        fs::write(dir.join("bad.json"), "{not json").unwrap();
        fs::write(dir.join("notes.txt"), "hello").unwrap();
        fs::write(dir.join(".hidden.csv"), "x").unwrap();
        w.poll().unwrap();
        assert!(w.poll().unwrap().is_empty());
        assert!(dir.join(REJECTED_DIR).join("bad.json.reason.txt").is_file());
        assert!(dir.join(REJECTED_DIR).join("notes.txt").is_file());
        assert!(dir.join(".hidden.csv").is_file());
    }

    #[test]
    fn relative_event_paths_resolve_against_the_directory() {
        let (_t, ws) = setup();
        let mut w = Watcher::new(&ws);
        let dir = ws.events_dir(INFERENCE_MACHINE);
        fs::create_dir(dir.join("data")).unwrap();
        fs::write(dir.join("data/in.csv"), "record_id,short_description,medium_description\n").unwrap();
        let body = r#"{"event_id":"e1","kind":"inference_request","payload":{"input":"data/in.csv"},"timestamp":"t"}"#;
        fs::write(dir.join("e1.json"), body).unwrap();
        w.poll().unwrap();
        let evs = w.poll().unwrap();
        assert_eq!(evs[0].input().unwrap(), dir.join("data/in.csv"));
    }
}
