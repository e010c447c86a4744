use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::machine::{INFERENCE_MACHINE, RETRAINING_MACHINE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    InferenceRequest,
    RetrainingRequest,
    DriftAlert,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::InferenceRequest => "inference_request",
            EventKind::RetrainingRequest => "retraining_request",
            EventKind::DriftAlert => "drift_alert",
        }
    }

    /// Name of the state machine that handles this kind.
    pub fn machine(&self) -> &'static str {
        match self {
            EventKind::InferenceRequest => INFERENCE_MACHINE,
            EventKind::RetrainingRequest | EventKind::DriftAlert => RETRAINING_MACHINE,
        }
    }

    /// Payload key holding the input file.
    pub fn input_key(&self) -> &'static str {
        match self {
            EventKind::InferenceRequest => "input",
            EventKind::RetrainingRequest | EventKind::DriftAlert => "data",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| PipelineError::InvalidEvent(format!("unknown event kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    WatchDir,
    #[default]
    Cli,
    Monitor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub event_id: String,
    pub kind: EventKind,
    /// Input paths (`input` for inference, `data` for retraining) plus options.
    pub payload: BTreeMap<String, serde_json::Value>,
    pub timestamp: String,
    #[serde(default)]
    pub source: EventSource,
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn new_event_id() -> String {
    format!("evt-{}", uuid::Uuid::new_v4().simple())
}

impl Event {
    pub fn new(kind: EventKind, input: &Path, source: EventSource) -> Self {
        let mut payload = BTreeMap::new();
        payload.insert(kind.input_key().to_string(), serde_json::Value::String(input.display().to_string()));
        Event { event_id: new_event_id(), kind, payload, timestamp: now_rfc3339(), source }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.payload.get(key).and_then(|v| v.as_str()).map(PathBuf::from)
    }

    pub fn input(&self) -> Option<PathBuf> {
        self.path(self.kind.input_key())
    }

    pub fn flag(&self, key: &str) -> Option<bool> {
        self.payload.get(key).and_then(|v| v.as_bool())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let e: Event = serde_json::from_str(text).map_err(|e| PipelineError::InvalidEvent(e.to_string()))?;
        e.check_shape()?;
        Ok(e)
    }

    fn check_shape(&self) -> Result<()> {
        let id_ok = !self.event_id.is_empty()
            && self.event_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.');
        if !id_ok {
            return Err(PipelineError::InvalidEvent(format!("event_id {:?} must be non-empty [A-Za-z0-9._-]", self.event_id)));
        }
        if self.input().is_none() {
            return Err(PipelineError::InvalidEvent(format!(
                "{} event needs a payload.{} path",
                self.kind,
                self.kind.input_key()
            )));
        }
        Ok(())
    }

    /// Payload paths must exist when the event is dispatched.
    pub fn check_dispatchable(&self) -> Result<()> {
        self.check_shape()?;
        let input = self.input().expect("checked");
        if !input.is_file() {
            return Err(PipelineError::InvalidEvent(format!("payload path {} does not exist", input.display())));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_route_to_machines() {
        assert_eq!(EventKind::InferenceRequest.machine(), INFERENCE_MACHINE);
        assert_eq!(EventKind::DriftAlert.machine(), RETRAINING_MACHINE);
        assert_eq!("drift_alert".parse::<EventKind>().unwrap(), EventKind::DriftAlert);
        assert!("nope".parse::<EventKind>().is_err());
    }

    #[test]
    fn parse_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("b.csv");
        let text = format!(
            r#"{{"event_id":"e-1","kind":"inference_request","payload":{{"input":"{}"}},"timestamp":"2024-01-01T00:00:00Z"}}"#,
            input.display()
        );
        let e = Event::parse(&text).unwrap();
        assert_eq!(e.input().unwrap(), input);
        assert_eq!(e.source, EventSource::Cli);
        assert!(e.check_dispatchable().is_err());
        std::fs::write(&input, "x").unwrap();
        e.check_dispatchable().unwrap();

        assert!(Event::parse(r#"{"event_id":"e/1","kind":"inference_request","payload":{"input":"a"},"timestamp":"t"}"#).is_err());
        assert!(Event::parse(r#"{"event_id":"e1","kind":"retraining_request","payload":{"input":"a"},"timestamp":"t"}"#).is_err());
        assert!(Event::parse("{").is_err());
    }

    #[test]
    fn fresh_ids_differ() {
        let a = Event::new(EventKind::InferenceRequest, Path::new("x"), EventSource::Cli);
        let b = Event::new(EventKind::InferenceRequest, Path::new("x"), EventSource::Cli);
        assert_ne!(a.event_id, b.event_id);
        assert_eq!(Event::parse(&a.to_json().unwrap()).unwrap(), a);
    }
}
