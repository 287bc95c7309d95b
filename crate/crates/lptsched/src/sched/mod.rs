//! The workload scheduler: per-model warm GPU pools fed from one shared
//! cold reservoir.
//!
//! Allocation runs in deadline order. The warm allocator grows each job's
//! gang one replica at a time until the predicted completion fits the
//! remaining SLO. Jobs the warm pool cannot satisfy are first tested with
//! `delay_schedulable` — can they wait for GPUs that running jobs will
//! release? — and only then trigger cold additions, which pay the model's
//! transition latency. Idle warm GPUs drain back to the cold pool after a
//! reclamation window.
//!
//! All functions here are synchronous and deterministic: state in, plan
//! out. The event loop owns every structure; hosts may shard pools by
//! model.

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::Result;
use crate::job::{predict_time, Job, JobId};
use crate::ModelId;

/// One predicted-release entry in a pool's availability list E_l: the GPU
/// covered by this entry is free for general use no later than `at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvailEntry {
    pub at: f64,
    pub owner: JobId,
}

/// Per-model warm pool: GPUs with the runtime and weights pre-loaded.
/// Free GPUs carry their idle-since timestamp (newest reused first);
/// busy-or-promised GPUs are tracked through the availability list.
#[derive(Debug, Clone)]
pub struct WarmPool {
    pub model: ModelId,
    idle_since: Vec<f64>,
    busy: u32,
    /// Cold GPUs in transit to this pool.
    promised: u32,
    earliest_avail: Vec<AvailEntry>,
}

impl WarmPool {
    pub fn new(model: ModelId) -> Self {
        Self {
            model,
            idle_since: Vec::new(),
            busy: 0,
            promised: 0,
            earliest_avail: Vec::new(),
        }
    }

    #[cfg(test)]
    pub fn with_free(model: ModelId, n: u32, now: f64) -> Self {
        let mut p = Self::new(model);
        p.idle_since = vec![now; n as usize];
        p
    }

    pub fn free(&self) -> u32 {
        self.idle_since.len() as u32
    }

    pub fn busy(&self) -> u32 {
        self.busy
    }

    pub fn in_transit(&self) -> u32 {
        self.promised
    }

    /// GPUs physically present and billed: free + busy.
    pub fn provisioned_present(&self) -> u32 {
        self.free() + self.busy
    }

    /// Everything this pool owns against the cold reservoir, transit
    /// included; conservation checks sum this.
    pub fn total_tracked(&self) -> u32 {
        self.free() + self.busy + self.promised
    }

    /// Free GPUs minus the ones earmarked for queued reservations.
    pub fn available_for_new(&self, earmarked: u32) -> u32 {
        self.free().saturating_sub(earmarked)
    }

    pub fn entries(&self) -> &[AvailEntry] {
        &self.earliest_avail
    }

    pub fn entries_mut(&mut self) -> &mut Vec<AvailEntry> {
        &mut self.earliest_avail
    }

    /// Take `gpus` free GPUs for a job starting now; records the predicted
    /// release for each.
    pub fn start_warm(&mut self, job: JobId, gpus: u32, predicted_finish: f64) {
        debug_assert!(gpus <= self.free());
        for _ in 0..gpus {
            self.idle_since.pop();
        }
        self.busy += gpus;
        for _ in 0..gpus {
            self.earliest_avail.push(AvailEntry {
                at: predicted_finish,
                owner: job,
            });
        }
    }

    /// Hold `gpus` free GPUs for a gang that starts once its cold part
    /// arrives. Availability entries for the whole gang are pushed by the
    /// cold allocator.
    pub fn hold_for_gang(&mut self, gpus: u32) {
        debug_assert!(gpus <= self.free());
        for _ in 0..gpus {
            self.idle_since.pop();
        }
        self.busy += gpus;
    }

    pub fn add_in_transit(&mut self, gpus: u32) {
        self.promised += gpus;
    }

    pub fn transit_arrived(&mut self, gpus: u32) {
        debug_assert!(gpus <= self.promised);
        self.promised -= gpus;
        self.busy += gpus;
    }

    /// Release a finished job's GPUs back to the free list and drop its
    /// availability entries.
    pub fn complete(&mut self, job: JobId, gpus: u32, now: f64) {
        debug_assert!(gpus <= self.busy);
        self.busy -= gpus;
        for _ in 0..gpus {
            self.idle_since.push(now);
        }
        self.earliest_avail.retain(|e| e.owner != job);
    }

    /// Return free GPUs idle for at least `window` to the cold pool,
    /// oldest first, but never dig into GPUs earmarked for queued
    /// reservations. Returns the reclaimed count.
    pub fn reclaim(&mut self, now: f64, window: f64, earmarked: u32) -> u32 {
        let reclaimable = self.idle_since.len().saturating_sub(earmarked as usize);
        if reclaimable == 0 {
            return 0;
        }
        let mut order: Vec<usize> = (0..self.idle_since.len()).collect();
        order.sort_by(|&a, &b| self.idle_since[a].total_cmp(&self.idle_since[b]));
        let mut victims: Vec<usize> = order
            .into_iter()
            .filter(|&i| now - self.idle_since[i] >= window)
            .take(reclaimable)
            .collect();
        victims.sort_unstable_by(|a, b| b.cmp(a));
        for i in &victims {
            self.idle_since.remove(*i);
        }
        victims.len() as u32
    }
}

/// The shared reservoir of uninitialized GPUs. Holding them is free;
/// moving one into a warm pool costs that model's transition time.
#[derive(Debug, Clone, Copy)]
pub struct ColdPool {
    pub remaining: u32,
}

impl ColdPool {
    pub fn new(size: u32) -> Self {
        Self { remaining: size }
    }

    pub fn take(&mut self, n: u32) {
        debug_assert!(n <= self.remaining);
        self.remaining -= n;
    }

    pub fn give_back(&mut self, n: u32) {
        self.remaining += n;
    }
}

/// Upper-bound wall time for `job` on `a` warm GPUs, bank phase included.
pub fn planned_runtime(job: &Job, a: u32, cfg: &SimConfig) -> Result<f64> {
    Ok(job.bank_time + predict_time(job, a, false, cfg)?)
}

/// A job admitted onto warm GPUs right now.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmStart {
    pub job: JobId,
    pub gpus: u32,
    pub predicted_finish: f64,
}

/// A job gang-started on held warm GPUs plus cold additions; it begins
/// executing when the cold part arrives at `start_at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColdStart {
    pub job: JobId,
    pub gpus: u32,
    pub warm_held: u32,
    pub cold_added: u32,
    pub start_at: f64,
    pub predicted_finish: f64,
}

/// Output of one cold-allocation pass.
#[derive(Debug, Clone, Default)]
pub struct ColdPlan {
    pub starts: Vec<ColdStart>,
    /// Jobs promised future warm GPUs via `delay_schedulable`, with the
    /// gang size they wait for.
    pub delayed: Vec<(JobId, u32)>,
    /// Jobs whose SLO cannot be met even if the entire GPU budget were
    /// free; the caller marks them violated at detection instead of
    /// queueing them. Jobs that merely lost the race for the currently
    /// remaining reservoir stay pending and retry next round.
    pub infeasible: Vec<JobId>,
    /// Cold GPUs added per model (B_l).
    pub cold_added_by_model: Vec<u32>,
}

fn deadline_order(pending: &mut Vec<&Job>, now: f64) {
    pending.sort_by(|a, b| {
        a.remaining_slo(now)
            .total_cmp(&b.remaining_slo(now))
            .then(a.id.cmp(&b.id))
    });
}

/// Warm-pool allocation: jobs in ascending remaining-SLO order each grow
/// their gang by one replica until the predicted completion fits the
/// remaining SLO; infeasible jobs get nothing and stay pending.
pub fn allocate_warm(
    pool: &mut WarmPool,
    pending: &[&Job],
    now: f64,
    cfg: &SimConfig,
    earmarked: u32,
) -> Vec<WarmStart> {
    debug_assert!(pending.iter().all(|j| j.model == pool.model));
    let g = cfg.model(pool.model).gpus_per_replica;
    let mut queue: Vec<&Job> = pending.to_vec();
    deadline_order(&mut queue, now);

    let mut starts = Vec::new();
    let mut budget = pool.available_for_new(earmarked);
    for job in queue {
        let slack = job.remaining_slo(now);
        if slack <= 0.0 {
            continue;
        }
        let mut a = g;
        while a <= budget {
            let t = planned_runtime(job, a, cfg).expect("a is a replica multiple");
            if t <= slack {
                let finish = now + t;
                pool.start_warm(job.id, a, finish);
                budget -= a;
                starts.push(WarmStart {
                    job: job.id,
                    gpus: a,
                    predicted_finish: finish,
                });
                break;
            }
            a += g;
        }
    }
    starts
}

/// Can `job` meet its SLO by waiting for GPUs that running jobs will
/// release? Scans gang sizes k (in replica multiples) against the sorted
/// availability list; on success the first k entries are overwritten with
/// the job's projected finish and the gang size is returned. On failure
/// the list is untouched.
pub fn delay_schedulable(
    entries: &mut Vec<AvailEntry>,
    job: &Job,
    now: f64,
    cfg: &SimConfig,
) -> Option<u32> {
    entries.sort_by(|a, b| a.at.total_cmp(&b.at).then(a.owner.cmp(&b.owner)));
    debug_assert!(entries.iter().all(|e| e.at >= now - 1e-9));
    let g = cfg.model(job.model).gpus_per_replica;
    let slack = job.remaining_slo(now);
    let mut k = g;
    while k as usize <= entries.len() {
        let avail = entries[k as usize - 1].at;
        let dur = planned_runtime(job, k, cfg).expect("k is a replica multiple");
        if dur + avail - now <= slack {
            let projected_finish = avail + dur;
            for e in entries.iter_mut().take(k as usize) {
                *e = AvailEntry {
                    at: projected_finish,
                    owner: job.id,
                };
            }
            entries.sort_by(|a, b| a.at.total_cmp(&b.at).then(a.owner.cmp(&b.owner)));
            return Some(k);
        }
        k += g;
    }
    None
}

/// Cold-pool allocation across all models. Pending jobs run in ascending
/// remaining-SLO order; each is first tested with `delay_schedulable`,
/// then grown a replica at a time — free warm GPUs first, cold top-up —
/// until the predicted completion plus the cold transition fits the SLO.
/// Jobs that cannot fit even with the whole remaining reservoir are
/// reported infeasible.
pub fn allocate_cold(
    pools: &mut [WarmPool],
    cold: &mut ColdPool,
    pending: &[&Job],
    earmarks: &[u32],
    now: f64,
    cfg: &SimConfig,
    delay_enabled: bool,
) -> ColdPlan {
    let mut queue: Vec<&Job> = pending.to_vec();
    deadline_order(&mut queue, now);

    let mut plan = ColdPlan {
        cold_added_by_model: vec![0; pools.len()],
        ..ColdPlan::default()
    };
    // Newly delayed jobs earmark free GPUs for the rest of this pass too.
    let mut earmarks = earmarks.to_vec();

    for job in queue {
        let slack = job.remaining_slo(now);
        if slack <= 0.0 {
            continue;
        }
        let l = job.model.0;
        if delay_enabled {
            if let Some(k) = delay_schedulable(pools[l].entries_mut(), job, now, cfg) {
                plan.delayed.push((job.id, k));
                earmarks[l] += k;
                continue;
            }
        }
        let g = cfg.model(job.model).gpus_per_replica;
        let t_cold = cfg.cold_transition(job.model);
        let free_avail = pools[l].available_for_new(earmarks[l]);
        let max_admit = free_avail + cold.remaining;
        let feasible = |a: u32| {
            planned_runtime(job, a, cfg).expect("replica multiple") + t_cold <= slack
        };
        let mut admitted = false;
        let mut a = g;
        while a <= max_admit {
            if feasible(a) {
                let warm_held = a.min(free_avail);
                let cold_added = a - warm_held;
                pools[l].hold_for_gang(warm_held);
                pools[l].add_in_transit(cold_added);
                cold.take(cold_added);
                let predicted_finish = now + planned_runtime(job, a, cfg).unwrap() + t_cold;
                for _ in 0..a {
                    pools[l].entries_mut().push(AvailEntry {
                        at: predicted_finish,
                        owner: job.id,
                    });
                }
                plan.cold_added_by_model[l] += cold_added;
                plan.starts.push(ColdStart {
                    job: job.id,
                    gpus: a,
                    warm_held,
                    cold_added,
                    start_at: now + t_cold,
                    predicted_finish,
                });
                admitted = true;
                break;
            }
            a += g;
        }
        if !admitted {
            // Hopeless only if even the whole configured budget could not
            // meet the deadline; otherwise retry when GPUs come back.
            let cap = cfg.total_gpus.max(max_admit);
            let mut any = false;
            let mut a = g;
            while a <= cap {
                if feasible(a) {
                    any = true;
                    break;
                }
                a += g;
            }
            if !any {
                plan.infeasible.push(job.id);
            }
        }
    }
    plan
}

/// Return every free warm GPU idle for at least `window` to the cold
/// pool. Earmarked GPUs (queued reservations) are exempt.
pub fn reclaim_idle(
    pools: &mut [WarmPool],
    cold: &mut ColdPool,
    now: f64,
    window: f64,
    earmarks: &[u32],
) -> Vec<u32> {
    let mut removed = Vec::with_capacity(pools.len());
    for (l, pool) in pools.iter_mut().enumerate() {
        let n = pool.reclaim(now, window, earmarks[l]);
        cold.give_back(n);
        removed.push(n);
    }
    removed
}

/// The latency-budget router: run the bank phase only when its estimated
/// latency fits within the configured fraction of the job's SLO.
pub fn route_to_bank(job: &Job, bank_latency_estimate: f64, cfg: &SimConfig) -> bool {
    debug_assert!(bank_latency_estimate >= 0.0);
    bank_latency_estimate <= cfg.latency_budget_fraction * job.slo
}
