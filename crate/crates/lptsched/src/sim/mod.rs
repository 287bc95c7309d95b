//! Trace-driven simulation: workload generation, the deterministic event
//! engine, policies, and run reports.

pub mod engine;
pub mod report;
pub mod trace;
pub mod world;

pub use engine::{
    prepare, run, run_prepared, run_with_observer, Knobs, PolicyKind, PolicySpec, SimSnapshot,
};
pub use report::{CostAccumulator, JobOutcome, PoolSample, RunReport};
pub use trace::{
    generate_trace, preset_rates, LoadPreset, RatePlan, Trace, TraceRecord, PRESET_MINUTES,
};
pub use world::{ItaProfile, SyntheticWorld};
