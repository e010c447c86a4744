//! Local orchestration of the model lifecycle: event-triggered inference and
//! retraining runs executed as persisted state machines, a versioned model
//! registry with an atomically switched active pointer, and drift monitoring.

pub mod actions;
pub mod config;
pub mod drift;
mod error;
pub mod event;
pub mod executor;
pub mod fsutil;
pub mod machine;
pub mod ops;
pub mod presets;
pub mod orchestrator;
pub mod registry;
pub mod run;
pub mod watcher;
pub mod workspace;

pub use config::PipelineConfig;
pub use error::{PipelineError, Result};
pub use event::{Event, EventKind, EventSource};
pub use machine::{define_inference_machine, define_retraining_machine, StateMachineDef};
pub use run::{PipelineRun, RunStatus, RunStore, StateStatus};
pub use actions::builtin_actions;
pub use orchestrator::Orchestrator;
pub use workspace::Workspace;
