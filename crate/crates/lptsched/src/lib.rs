//! SLO-aware elastic resource management for LLM prompt-tuning workloads:
//! per-model warm GPU pools fed from a shared cold reservoir, a two-layer
//! clustered prompt bank, and a deterministic discrete-event simulator
//! that replays traces against the scheduler and two baseline policies.

pub mod bank;
pub mod config;
pub mod error;
pub mod job;
pub mod sched;
pub mod sim;

mod util;

pub use config::{ModelId, ModelSpec, SimConfig};
pub use error::{Error, Result};
pub use job::{predict_time, Job, JobId, JobState, TaskId};
