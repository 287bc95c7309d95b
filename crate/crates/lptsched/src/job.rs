//! Jobs and the execution-time model.
//!
//! A job is one prompt-tuning request: a model, an arrival time, an
//! iteration budget that depends on the initial prompt's quality, and an
//! SLO deadline. `predict_time` is the upper-bound completion estimate
//! both allocators plan against.

use serde::{Deserialize, Serialize};

use crate::config::{ModelId, SimConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Pending,
    InBank,
    Running,
    Done,
    Violated,
}

impl JobState {
    /// Legal transitions: pending -> in_bank -> running -> done,
    /// pending -> running -> done, and any -> violated.
    pub fn can_advance_to(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Pending, InBank) | (Pending, Running) | (InBank, Running) | (Running, Done)
        ) || next == Violated
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Job {
    pub id: JobId,
    pub model: ModelId,
    pub task: TaskId,
    pub arrival_time: f64,
    /// Iteration count under the ideal prompt (the task's minimum ITA).
    pub base_iters: u64,
    /// ITA multiplier of the prompt currently attached to the job.
    pub multiplier: f64,
    /// Largest multiplier any prompt can have for this job's task; bounds
    /// `remaining_iters` from above.
    pub max_multiplier: f64,
    pub remaining_iters: u64,
    /// Seconds per iteration on one replica.
    pub iter_time_1gpu: f64,
    /// Deadline, in seconds after arrival.
    pub slo: f64,
    pub state: JobState,
    /// Set once by the latency-budget router.
    pub use_bank: bool,
    /// Modeled duration of the bank phase (0 when the bank is skipped).
    pub bank_time: f64,
}

impl Job {
    /// Iteration count for a prompt with the given ITA multiplier.
    pub fn iters_for_multiplier(&self, multiplier: f64) -> u64 {
        ((self.base_iters as f64) * multiplier).round().max(1.0) as u64
    }

    /// Attach a prompt: record its multiplier and reset the iteration budget.
    pub fn set_prompt(&mut self, multiplier: f64) {
        self.multiplier = multiplier;
        self.remaining_iters = self.iters_for_multiplier(multiplier);
    }

    pub fn deadline(&self) -> f64 {
        self.arrival_time + self.slo
    }

    /// Slack left before the deadline; jobs age while queued, so allocators
    /// order and test feasibility against this, not the nominal SLO.
    pub fn remaining_slo(&self, now: f64) -> f64 {
        self.deadline() - now
    }

    pub fn set_state(&mut self, next: JobState) {
        debug_assert!(
            self.state.can_advance_to(next),
            "illegal job state transition {:?} -> {:?}",
            self.state,
            next
        );
        self.state = next;
    }
}

/// Upper-bound completion time for `job` on `a` GPUs: remaining iterations
/// times per-iteration cost, divided by the replica count, plus the model's
/// cold transition when GPUs still have to be warmed.
///
/// `a` is quantized down to a whole number of replicas; fewer GPUs than one
/// replica is an error.
pub fn predict_time(job: &Job, a: u32, include_cold: bool, cfg: &SimConfig) -> Result<f64> {
    let spec = cfg.model(job.model);
    let g = spec.gpus_per_replica;
    let replicas = a / g;
    if replicas == 0 {
        return Err(Error::InvalidGpuCount {
            requested: a,
            gpus_per_replica: g,
            model: spec.name.clone(),
        });
    }
    let tune = job.remaining_iters as f64 * job.iter_time_1gpu * (1.0 + cfg.exec.comm_fraction)
        / replicas as f64;
    let cold = if include_cold {
        cfg.cold_transition(job.model)
    } else {
        0.0
    };
    Ok(tune + cold)
}

/// SLO for a trace job: duration stretched by the emergence parameter S,
/// plus the resource allocation overhead.
pub fn job_slo_from_trace(duration: f64, s: f64, alloc_overhead: f64) -> f64 {
    debug_assert!(duration > 0.0 && s > 0.0 && alloc_overhead >= 0.0);
    duration * s + alloc_overhead
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn test_job(remaining: u64, iter_time: f64, model: ModelId) -> Job {
        Job {
            id: JobId(1),
            model,
            task: TaskId(0),
            arrival_time: 0.0,
            base_iters: remaining,
            multiplier: 1.0,
            max_multiplier: 4.0,
            remaining_iters: remaining,
            iter_time_1gpu: iter_time,
            slo: 100.0,
            state: JobState::Pending,
            use_bank: false,
            bank_time: 0.0,
        }
    }

    fn zero_comm_cfg() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.exec.comm_fraction = 0.0;
        cfg
    }

    #[test]
    fn exact_division_zero_overhead() {
        let cfg = zero_comm_cfg();
        let job = test_job(120, 1.0, ModelId(0));
        assert_eq!(predict_time(&job, 3, false, &cfg).unwrap(), 40.0);
    }

    #[test]
    fn cold_transition_added() {
        let cfg = zero_comm_cfg();
        let job = test_job(120, 1.0, ModelId(0));
        assert_eq!(predict_time(&job, 2, true, &cfg).unwrap(), 90.0);
    }

    #[test]
    fn no_work_remaining_is_free() {
        let cfg = zero_comm_cfg();
        let job = test_job(0, 1.0, ModelId(0));
        for a in 1..8 {
            assert_eq!(predict_time(&job, a, false, &cfg).unwrap(), 0.0);
        }
    }

    #[test]
    fn below_one_replica_is_invalid() {
        let mut cfg = zero_comm_cfg();
        cfg.models[0].gpus_per_replica = 4;
        let job = test_job(100, 1.0, ModelId(0));
        assert!(matches!(
            predict_time(&job, 3, false, &cfg),
            Err(Error::InvalidGpuCount { .. })
        ));
    }

    #[test]
    fn quantized_to_replica_multiples() {
        let mut cfg = zero_comm_cfg();
        cfg.models[0].gpus_per_replica = 4;
        let job = test_job(100, 1.0, ModelId(0));
        // 7 gpus run one replica, same as 4.
        assert_eq!(
            predict_time(&job, 7, false, &cfg).unwrap(),
            predict_time(&job, 4, false, &cfg).unwrap()
        );
        assert_eq!(
            predict_time(&job, 11, false, &cfg).unwrap(),
            predict_time(&job, 8, false, &cfg).unwrap()
        );
    }

    #[test]
    fn slo_from_trace_examples() {
        assert_eq!(job_slo_from_trace(100.0, 1.0, 30.0), 130.0);
        assert_eq!(job_slo_from_trace(100.0, 0.5, 0.0), 50.0);
        assert_eq!(job_slo_from_trace(60.0, 1.5, 30.0), 120.0);
    }

    proptest! {
        #[test]
        fn predicted_time_strictly_decreasing_in_replicas(
            iters in 1u64..10_000,
            iter_time in 0.01f64..10.0,
            reps in 1u32..16,
        ) {
            let cfg = SimConfig::default();
            let job = test_job(iters, iter_time, ModelId(0));
            let t1 = predict_time(&job, reps, false, &cfg).unwrap();
            let t2 = predict_time(&job, reps + 1, false, &cfg).unwrap();
            prop_assert!(t2 < t1);
        }

        #[test]
        fn cold_delta_is_exactly_transition_time(
            iters in 0u64..10_000,
            a in 1u32..32,
        ) {
            let cfg = SimConfig::default();
            let job = test_job(iters, 0.7, ModelId(1));
            let warm = predict_time(&job, a, false, &cfg).unwrap();
            let cold = predict_time(&job, a, true, &cfg).unwrap();
            prop_assert!((cold - warm - cfg.cold_transition(job.model)).abs() < 1e-12);
        }

        #[test]
        fn slo_linear_in_s(d in 0.1f64..1000.0, s in 0.1f64..4.0, o in 0.0f64..120.0) {
            let base = job_slo_from_trace(d, s, o);
            let doubled = job_slo_from_trace(d, 2.0 * s, o);
            prop_assert!(((doubled - o) - 2.0 * (base - o)).abs() < 1e-9);
        }
    }
}
