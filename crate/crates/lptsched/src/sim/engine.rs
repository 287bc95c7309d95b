//! Deterministic discrete-event engine.
//!
//! Virtual time is f64 seconds; ties between events break on a monotone
//! sequence number, so a run is a pure function of (trace, config,
//! policy). The scheduling round fires every `tick_interval` on an
//! integer grid (tick k at k * interval) while work remains.
//!
//! Three policies share the loop:
//!
//! * `prompttuner` — per-model warm pools over a shared cold reservoir:
//!   each tick routes new jobs through the latency-budget check, runs the
//!   warm allocator, the delay-aware cold allocator, then idle
//!   reclamation.
//! * `infless_like` — per-model instance autoscaling. Multi-GPU jobs
//!   assemble instances independently; freshly spun instances pay a
//!   seeded init delay and the job starts at the slowest instance.
//! * `elasticflow_like` — a fixed-size cluster with deadline-ordered
//!   elastic allocation; every job pays the runtime/weights load overhead
//!   and the whole cluster bills for the full run.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bank::{score, PromptIndex};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::job::{job_slo_from_trace, predict_time, Job, JobId, JobState, TaskId};
use crate::sched::{
    allocate_cold, allocate_warm, planned_runtime, reclaim_idle, route_to_bank, AvailEntry,
    ColdPool, WarmPool,
};
use crate::sim::report::{CostAccumulator, JobOutcome, PoolSample, RunReport};
use crate::sim::trace::Trace;
use crate::sim::world::SyntheticWorld;
use crate::util::stream_seed;

const TAG_INIT_DELAY: u64 = 20;
/// Instance init delays in the modeled serverless baseline: "tens of
/// seconds", drawn uniform per instance.
const INIT_DELAY_RANGE: (f64, f64) = (5.0, 40.0);
/// Slop for deadline comparisons against accumulated float arithmetic.
const TIME_EPS: f64 = 1e-6;
const EVENT_LOG_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    PromptTuner,
    InflessLike,
    ElasticFlowLike,
}

impl PolicyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "prompttuner" => Ok(PolicyKind::PromptTuner),
            "infless_like" => Ok(PolicyKind::InflessLike),
            "elasticflow_like" => Ok(PolicyKind::ElasticFlowLike),
            other => Err(Error::UnknownPolicy(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::PromptTuner => "prompttuner",
            PolicyKind::InflessLike => "infless_like",
            PolicyKind::ElasticFlowLike => "elasticflow_like",
        }
    }
}

/// Component switches for ablation runs; all on by default.
#[derive(Debug, Clone, Copy, Default)]
pub struct Knobs {
    /// Replace the gang warm allocator with per-instance grabbing.
    pub disable_warm_gang: bool,
    /// Stub DelaySchedulable to always-false.
    pub disable_delay: bool,
    /// Run the bank for every request regardless of its SLO budget.
    pub disable_budget: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub knobs: Knobs,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            knobs: Knobs::default(),
        }
    }

    /// Policy label including active knobs, echoed in reports.
    pub fn label(&self) -> String {
        let mut s = self.kind.name().to_string();
        if self.knobs.disable_warm_gang {
            s.push_str("+no-warm-allocator");
        }
        if self.knobs.disable_delay {
            s.push_str("+no-delay");
        }
        if self.knobs.disable_budget {
            s.push_str("+no-budget");
        }
        s
    }
}

/// Per-event view handed to an observer: enough to check conservation and
/// re-derive the cost integral independently.
#[derive(Debug)]
pub struct SimSnapshot<'a> {
    pub time: f64,
    pub events_processed: u64,
    pub cold_remaining: u32,
    /// Per-model GPUs owned against the reservoir (free + busy + transit).
    pub tracked: &'a [u32],
    /// GPUs currently accruing cost.
    pub billed: u32,
    pub total_gpus: u32,
    pub gpu_seconds_accrued: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Arrival(usize),
    /// A job's full gang became ready (cold GPUs arrived / instances
    /// finished initializing): execution begins.
    GangReady(usize),
    /// Bank phase over: adopt a prompt and start tuning.
    BankDone(usize),
    Completion(usize),
    Tick,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scheduled {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl Eq for Scheduled {}

impl Ord for Scheduled {
    // Reversed: BinaryHeap pops the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
struct JobRt {
    job: Job,
    routed: bool,
    admitted: bool,
    start: Option<f64>,
    finish: Option<f64>,
    gpus: u32,
    /// Cold GPUs (or spun instances) this job waits on before starting.
    spun: u32,
    bank_used: bool,
    /// Warm GPUs grabbed so far during non-gang assembly.
    held: u32,
    /// Promised future warm GPUs by `delay_schedulable`; such a job stays
    /// pending, competes in the warm allocator by deadline, and is kept
    /// away from the cold path.
    promised: bool,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    world: &'a SyntheticWorld,
    index: &'a PromptIndex,
    policy: PolicySpec,
    bank_estimate: f64,

    jobs: Vec<JobRt>,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    now: f64,
    tick_scheduled: bool,
    /// Non-tick events still in the heap.
    future_events: usize,
    /// Jobs not yet terminal.
    unfinished: usize,
    pending: Vec<usize>,

    // prompttuner
    pools: Vec<WarmPool>,
    cold: ColdPool,

    // infless_like
    inst_idle: Vec<Vec<f64>>,
    inst_busy: Vec<u32>,
    inst_spinning: Vec<u32>,
    budget_free: u32,

    // elasticflow_like
    ef_free: u32,
    ef_busy: u32,

    acc: CostAccumulator,
    series: Vec<PoolSample>,
    last_series: Vec<(u32, u32)>,
    tracked_scratch: Vec<u32>,
    event_log: VecDeque<String>,
    events_processed: u64,
}

/// Build the synthetic world and the prompt bank for a config; reusable
/// across several runs of the same config.
pub fn prepare(cfg: &SimConfig) -> Result<(SyntheticWorld, PromptIndex)> {
    cfg.validate()?;
    let world = SyntheticWorld::new(&cfg.bank, cfg.seed);
    let index = world.build_index(
        cfg.bank.clusters.min(cfg.bank.capacity),
        cfg.bank.capacity,
    )?;
    Ok((world, index))
}

pub fn run(trace: &Trace, cfg: &SimConfig, policy: PolicySpec) -> Result<RunReport> {
    let (world, index) = prepare(cfg)?;
    run_prepared(trace, cfg, policy, &world, &index, &mut |_| {})
}

pub fn run_with_observer(
    trace: &Trace,
    cfg: &SimConfig,
    policy: PolicySpec,
    observer: &mut dyn FnMut(&SimSnapshot),
) -> Result<RunReport> {
    let (world, index) = prepare(cfg)?;
    run_prepared(trace, cfg, policy, &world, &index, observer)
}

pub fn run_prepared(
    trace: &Trace,
    cfg: &SimConfig,
    policy: PolicySpec,
    world: &SyntheticWorld,
    index: &PromptIndex,
    observer: &mut dyn FnMut(&SimSnapshot),
) -> Result<RunReport> {
    cfg.validate()?;
    let jobs = jobs_from_trace(trace, cfg, world)?;
    let n_models = cfg.models.len();
    let mut sim = Sim {
        cfg,
        world,
        index,
        policy,
        bank_estimate: index.latency_estimate(cfg.bank.per_eval_cost_s)?,
        jobs,
        heap: BinaryHeap::new(),
        seq: 0,
        now: 0.0,
        tick_scheduled: false,
        future_events: 0,
        unfinished: 0,
        pending: Vec::new(),
        pools: (0..n_models).map(|m| WarmPool::new(crate::ModelId(m))).collect(),
        cold: ColdPool::new(cfg.total_gpus),
        inst_idle: vec![Vec::new(); n_models],
        inst_busy: vec![0; n_models],
        inst_spinning: vec![0; n_models],
        budget_free: cfg.total_gpus,
        ef_free: cfg.total_gpus,
        ef_busy: 0,
        acc: CostAccumulator::default(),
        series: Vec::new(),
        last_series: Vec::new(),
        tracked_scratch: vec![0; n_models],
        event_log: VecDeque::new(),
        events_processed: 0,
    };
    sim.unfinished = sim.jobs.len();
    sim.run_loop(observer)?;
    Ok(sim.into_report(trace))
}

fn jobs_from_trace(trace: &Trace, cfg: &SimConfig, world: &SyntheticWorld) -> Result<Vec<JobRt>> {
    let mut jobs = Vec::with_capacity(trace.records.len());
    for (i, rec) in trace.records.iter().enumerate() {
        let model = cfg.model_by_name(&rec.model)?;
        if rec.task_id as usize >= world.task_count() {
            return Err(Error::InvalidConfig(format!(
                "trace record {i}: task_id {} outside the {} configured tasks",
                rec.task_id,
                world.task_count()
            )));
        }
        let spec = cfg.model(model);
        let base_iters = (rec.gpu_time_s / spec.iter_time_s).round().max(1.0) as u64;
        let ita = world.ita(base_iters);
        let task = TaskId(rec.task_id);
        let user_prompt = world.default_prompt(task, i as u64);
        let user_quality = world.quality(task, &user_prompt.features);
        let multiplier = ita.multiplier_for_quality(user_quality);
        let mut job = Job {
            id: JobId(i as u64),
            model,
            task,
            arrival_time: rec.submit_time_s,
            base_iters,
            multiplier: 1.0,
            max_multiplier: ita.max_multiplier(),
            remaining_iters: base_iters,
            iter_time_1gpu: spec.iter_time_s,
            slo: job_slo_from_trace(rec.gpu_time_s, trace.s, cfg.slo_alloc_overhead),
            state: JobState::Pending,
            use_bank: false,
            bank_time: 0.0,
        };
        job.set_prompt(multiplier);
        jobs.push(JobRt {
            job,
            routed: false,
            admitted: false,
            start: None,
            finish: None,
            gpus: 0,
            spun: 0,
            bank_used: false,
            held: 0,
            promised: false,
        });
    }
    Ok(jobs)
}

impl<'a> Sim<'a> {
    fn push_event(&mut self, time: f64, kind: EventKind) {
        if kind != EventKind::Tick {
            self.future_events += 1;
        }
        self.heap.push(Scheduled {
            time,
            seq: self.seq,
            kind,
        });
        self.seq += 1;
    }

    /// Schedule the first grid tick strictly after `t` (tick k sits at
    /// k * interval); the loop guard keeps float division from landing on
    /// or before `t`.
    fn schedule_tick_after(&mut self, t: f64) {
        if self.tick_scheduled {
            return;
        }
        let interval = self.cfg.tick_interval;
        let mut k = (t / interval).floor().max(0.0) as u64;
        while k as f64 * interval <= t {
            k += 1;
        }
        self.push_event(k as f64 * interval, EventKind::Tick);
        self.tick_scheduled = true;
    }

    fn log_event(&mut self, ev: &Scheduled) {
        if self.event_log.len() == EVENT_LOG_CAP {
            self.event_log.pop_front();
        }
        self.event_log
            .push_back(format!("t={:.6} seq={} {:?}", ev.time, ev.seq, ev.kind));
    }

    fn breach(&self, msg: String) -> Error {
        Error::InvariantBreach {
            msg,
            event_log: self.event_log.iter().cloned().collect(),
        }
    }

    fn run_loop(&mut self, observer: &mut dyn FnMut(&SimSnapshot)) -> Result<()> {
        for i in 0..self.jobs.len() {
            self.push_event(self.jobs[i].job.arrival_time, EventKind::Arrival(i));
        }
        if !self.jobs.is_empty() {
            self.schedule_tick_after(-self.cfg.tick_interval);
        }
        self.refresh_accounting();

        while let Some(ev) = self.heap.pop() {
            if ev.time < self.now - TIME_EPS {
                return Err(self.breach(format!(
                    "event at t={} before current time {}",
                    ev.time, self.now
                )));
            }
            self.now = self.now.max(ev.time);
            self.log_event(&ev);
            match ev.kind {
                EventKind::Tick => {
                    self.tick_scheduled = false;
                    self.tick()?;
                    if self.work_remains() {
                        self.schedule_tick_after(self.now);
                    }
                }
                EventKind::Arrival(i) => {
                    self.future_events -= 1;
                    self.pending.push(i);
                    self.schedule_tick_after(self.now);
                }
                EventKind::GangReady(i) => {
                    self.future_events -= 1;
                    self.gang_ready(i)?;
                }
                EventKind::BankDone(i) => {
                    self.future_events -= 1;
                    self.bank_done(i)?;
                }
                EventKind::Completion(i) => {
                    self.future_events -= 1;
                    self.complete(i)?;
                }
            }
            self.refresh_accounting();
            self.events_processed += 1;
            self.check_conservation()?;
            let snapshot = SimSnapshot {
                time: self.now,
                events_processed: self.events_processed,
                cold_remaining: match self.policy.kind {
                    PolicyKind::PromptTuner => self.cold.remaining,
                    PolicyKind::InflessLike => self.budget_free,
                    PolicyKind::ElasticFlowLike => 0,
                },
                tracked: &self.tracked_scratch,
                billed: self.acc.billed(),
                total_gpus: self.cfg.total_gpus,
                gpu_seconds_accrued: self.acc.gpu_seconds,
            };
            observer(&snapshot);
        }
        self.acc.advance(self.now);
        Ok(())
    }

    fn work_remains(&self) -> bool {
        if self.future_events > 0 || self.unfinished > 0 {
            return true;
        }
        // Drain idle capacity back to the reservoir before stopping.
        match self.policy.kind {
            PolicyKind::PromptTuner => {
                self.cfg.reclaim_window.is_finite()
                    && self.pools.iter().any(|p| p.provisioned_present() > 0)
            }
            PolicyKind::InflessLike => {
                self.cfg.reclaim_window.is_finite()
                    && self.inst_idle.iter().any(|v| !v.is_empty())
            }
            PolicyKind::ElasticFlowLike => false,
        }
    }

    // ── shared event handlers ──────────────────────────────────────────

    fn start_execution(&mut self, i: usize, now: f64) {
        let rt = &mut self.jobs[i];
        rt.start = Some(now);
        if rt.job.use_bank {
            rt.job.set_state(JobState::InBank);
            let t = now + rt.job.bank_time;
            self.push_event(t, EventKind::BankDone(i));
        } else {
            rt.job.set_state(JobState::Running);
            let tune = predict_time(&rt.job, rt.gpus, false, self.cfg)
                .expect("gang is a replica multiple");
            let t = now + tune;
            self.push_event(t, EventKind::Completion(i));
        }
    }

    fn gang_ready(&mut self, i: usize) -> Result<()> {
        let (model, spun) = (self.jobs[i].job.model.0, self.jobs[i].spun);
        match self.policy.kind {
            PolicyKind::PromptTuner => self.pools[model].transit_arrived(spun),
            PolicyKind::InflessLike => {
                self.inst_spinning[model] -= spun;
                self.inst_busy[model] += spun;
            }
            PolicyKind::ElasticFlowLike => unreachable!("elasticflow starts inline"),
        }
        self.start_execution(i, self.now);
        Ok(())
    }

    fn bank_done(&mut self, i: usize) -> Result<()> {
        let task = self.jobs[i].job.task;
        let scorer = self.world.scorer(task);
        let eval = self.world.eval_set(task);
        let outcome = self.index.lookup(&eval, &scorer)?;
        // The user's own initial prompt stays in the running: adopt the
        // bank's pick only when it scores at least as well.
        let user_prompt = self.world.default_prompt(task, i as u64);
        let user_score = score(&user_prompt, &eval, &scorer)?;
        let rt = &mut self.jobs[i];
        rt.bank_used = true;
        if outcome.score <= user_score {
            let cand = self
                .index
                .candidate(outcome.candidate_id)
                .expect("lookup returns a member id");
            let mult = self.world.candidate_multiplier(task, cand);
            rt.job.set_prompt(mult);
        }
        rt.job.set_state(JobState::Running);
        let tune =
            predict_time(&rt.job, rt.gpus, false, self.cfg).expect("gang is a replica multiple");
        let t = self.now + tune;
        // The prompt is settled now, so re-predict this job's completion
        // for the availability list; delay decisions would otherwise keep
        // planning against the stale default-prompt upper bound.
        if self.policy.kind == PolicyKind::PromptTuner {
            let model = self.jobs[i].job.model.0;
            let jid = self.jobs[i].job.id;
            for e in self.pools[model].entries_mut().iter_mut() {
                if e.owner == jid {
                    e.at = t;
                }
            }
        }
        self.push_event(t, EventKind::Completion(i));
        Ok(())
    }

    fn complete(&mut self, i: usize) -> Result<()> {
        let now = self.now;
        let (model, gpus, jid) = {
            let rt = &self.jobs[i];
            (rt.job.model.0, rt.gpus, rt.job.id)
        };
        match self.policy.kind {
            PolicyKind::PromptTuner => {
                self.pools[model].complete(jid, gpus, now);
            }
            PolicyKind::InflessLike => {
                self.inst_busy[model] -= gpus;
                for _ in 0..gpus {
                    self.inst_idle[model].push(now);
                }
            }
            PolicyKind::ElasticFlowLike => {
                self.ef_free += gpus;
                self.ef_busy -= gpus;
            }
        }
        let rt = &mut self.jobs[i];
        rt.finish = Some(now);
        let violated = now > rt.job.deadline() + TIME_EPS;
        rt.job.set_state(if violated {
            JobState::Violated
        } else {
            JobState::Done
        });
        let ran = now - rt.start.expect("completed job started");
        self.acc.add_storage(self.cfg.storage_gb_per_job, ran);
        self.unfinished -= 1;
        let _ = model;
        Ok(())
    }

    fn mark_violated(&mut self, i: usize) {
        let rt = &mut self.jobs[i];
        debug_assert!(!rt.admitted);
        rt.job.set_state(JobState::Violated);
        self.unfinished -= 1;
    }

    // ── tick ───────────────────────────────────────────────────────────

    fn tick(&mut self) -> Result<()> {
        self.sweep_expired();
        match self.policy.kind {
            PolicyKind::PromptTuner => self.tick_prompttuner(),
            PolicyKind::InflessLike => self.tick_infless(),
            PolicyKind::ElasticFlowLike => self.tick_elasticflow(),
        }
    }

    /// Pending jobs whose deadline has passed are violations; release any
    /// partially assembled gang and drop stale promise entries.
    fn sweep_expired(&mut self) {
        let now = self.now;
        let mut expired: Vec<usize> = Vec::new();
        self.pending.retain(|&i| {
            if self.jobs[i].job.deadline() <= now + TIME_EPS {
                expired.push(i);
                false
            } else {
                true
            }
        });
        for i in expired {
            let model = self.jobs[i].job.model.0;
            let jid = self.jobs[i].job.id;
            let held = self.jobs[i].held;
            if held > 0 {
                // Held gang parts were never tied to availability entries;
                // complete() only releases counted GPUs.
                self.pools[model].complete(jid, held, now);
                self.jobs[i].held = 0;
            }
            if self.jobs[i].promised {
                self.pools[model].entries_mut().retain(|e| e.owner != jid);
            }
            self.mark_violated(i);
        }
    }

    fn route_new(&mut self) {
        for &i in &self.pending {
            let rt = &mut self.jobs[i];
            if rt.routed {
                continue;
            }
            rt.routed = true;
            let use_bank = self.policy.knobs.disable_budget
                || route_to_bank(&rt.job, self.bank_estimate, self.cfg);
            rt.job.use_bank = use_bank;
            rt.job.bank_time = if use_bank { self.bank_estimate } else { 0.0 };
        }
    }

    fn tick_prompttuner(&mut self) -> Result<()> {
        let now = self.now;
        self.route_new();

        // Warm allocation per model. Delay-promised jobs stay in the queue
        // and compete by deadline like everyone else; their promise only
        // keeps the cold path off them.
        if !self.policy.knobs.disable_warm_gang {
            for m in 0..self.pools.len() {
                let jobs = &self.jobs;
                let model_pending: Vec<&Job> = self
                    .pending
                    .iter()
                    .filter(|&&i| jobs[i].job.model.0 == m)
                    .map(|&i| &jobs[i].job)
                    .collect();
                if model_pending.is_empty() {
                    continue;
                }
                let starts = allocate_warm(&mut self.pools[m], &model_pending, now, self.cfg, 0);
                for s in starts {
                    let i = s.job.0 as usize;
                    self.pending.retain(|&p| p != i);
                    if self.jobs[i].promised {
                        // The fulfilled promise's availability entries are
                        // superseded by the real allocation.
                        let jid = self.jobs[i].job.id;
                        let entries = self.pools[m].entries_mut();
                        entries.retain(|e| e.owner != jid);
                        for _ in 0..s.gpus {
                            entries.push(AvailEntry {
                                at: s.predicted_finish,
                                owner: jid,
                            });
                        }
                        self.jobs[i].promised = false;
                    }
                    let rt = &mut self.jobs[i];
                    rt.admitted = true;
                    rt.gpus = s.gpus;
                    self.start_execution(i, now);
                }
            }
        } else {
            self.assemble_non_gang();
        }

        // Delay-aware cold allocation over every model's leftovers.
        let jobs = &self.jobs;
        let cold_pending: Vec<&Job> = self
            .pending
            .iter()
            .filter(|&&i| jobs[i].held == 0 && !jobs[i].promised)
            .map(|&i| &jobs[i].job)
            .collect();
        if !cold_pending.is_empty() {
            let zeros = vec![0u32; self.pools.len()];
            let plan = allocate_cold(
                &mut self.pools,
                &mut self.cold,
                &cold_pending,
                &zeros,
                now,
                self.cfg,
                !self.policy.knobs.disable_delay,
            );
            for (jid, _k) in plan.delayed {
                let i = jid.0 as usize;
                self.jobs[i].promised = true;
            }
            for s in plan.starts {
                let i = s.job.0 as usize;
                self.pending.retain(|&p| p != i);
                let rt = &mut self.jobs[i];
                rt.admitted = true;
                rt.gpus = s.gpus;
                rt.spun = s.cold_added;
                self.push_event(s.start_at, EventKind::GangReady(i));
            }
            for jid in plan.infeasible {
                let i = jid.0 as usize;
                self.pending.retain(|&p| p != i);
                self.mark_violated(i);
            }
        }

        // Never shrink a pool while demand queues against it.
        let jobs = &self.jobs;
        let exempt: Vec<u32> = (0..self.pools.len())
            .map(|m| {
                if self.pending.iter().any(|&i| jobs[i].job.model.0 == m) {
                    u32::MAX
                } else {
                    0
                }
            })
            .collect();
        reclaim_idle(
            &mut self.pools,
            &mut self.cold,
            now,
            self.cfg.reclaim_window,
            &exempt,
        );
        Ok(())
    }

    /// "Without warm allocator": jobs grab warm GPUs one instance at a
    /// time with no simultaneous-gang guarantee, holding what they have
    /// until the target assembles.
    fn assemble_non_gang(&mut self) {
        let now = self.now;
        let mut order: Vec<usize> = self.pending.clone();
        let jobs = &self.jobs;
        order.sort_by(|&a, &b| {
            jobs[a]
                .job
                .remaining_slo(now)
                .total_cmp(&jobs[b].job.remaining_slo(now))
                .then(jobs[a].job.id.cmp(&jobs[b].job.id))
        });
        let mut started: Vec<usize> = Vec::new();
        let mut hopeless: Vec<usize> = Vec::new();
        for i in order {
            let (model, g) = {
                let j = &self.jobs[i].job;
                (j.model.0, self.cfg.model(j.model).gpus_per_replica)
            };
            let slack = self.jobs[i].job.remaining_slo(now);
            let mut target = 0;
            let mut a = g;
            while a <= self.cfg.total_gpus {
                if planned_runtime(&self.jobs[i].job, a, self.cfg).expect("replica multiple")
                    <= slack
                {
                    target = a;
                    break;
                }
                a += g;
            }
            if target == 0 {
                if self.jobs[i].held > 0 {
                    let jid = self.jobs[i].job.id;
                    let held = self.jobs[i].held;
                    self.pools[model].complete(jid, held, now);
                    self.jobs[i].held = 0;
                }
                hopeless.push(i);
                continue;
            }
            let have = self.jobs[i].held;
            if have < target {
                let avail = self.pools[model].available_for_new(0);
                let grab = avail.min(target - have);
                if grab > 0 {
                    self.pools[model].hold_for_gang(grab);
                    self.jobs[i].held += grab;
                }
            }
            if self.jobs[i].held >= target {
                let finish = now
                    + planned_runtime(&self.jobs[i].job, target, self.cfg)
                        .expect("replica multiple");
                let jid = self.jobs[i].job.id;
                for _ in 0..target {
                    self.pools[model].entries_mut().push(AvailEntry {
                        at: finish,
                        owner: jid,
                    });
                }
                let rt = &mut self.jobs[i];
                rt.gpus = target;
                rt.held = 0;
                rt.admitted = true;
                started.push(i);
                self.start_execution(i, now);
            }
        }
        for i in started {
            self.pending.retain(|&p| p != i);
        }
        for i in hopeless {
            self.pending.retain(|&p| p != i);
            self.mark_violated(i);
        }
    }

    fn tick_infless(&mut self) -> Result<()> {
        let now = self.now;
        self.route_new();
        let mut order: Vec<usize> = self.pending.clone();
        let jobs = &self.jobs;
        order.sort_by(|&a, &b| {
            jobs[a]
                .job
                .remaining_slo(now)
                .total_cmp(&jobs[b].job.remaining_slo(now))
                .then(jobs[a].job.id.cmp(&jobs[b].job.id))
        });
        let mut started = Vec::new();
        for i in order {
            let (model, g) = {
                let j = &self.jobs[i].job;
                (j.model.0, self.cfg.model(j.model).gpus_per_replica)
            };
            let slack = self.jobs[i].job.remaining_slo(now);
            let idle = self.inst_idle[model].len() as u32;
            let available = idle + self.budget_free;
            // Instance init delay is invisible to the allocator: the
            // modeled serverless scheduler sizes the gang as if every
            // instance were ready now.
            let mut chosen = 0;
            let mut a = g;
            while a <= available {
                if planned_runtime(&self.jobs[i].job, a, self.cfg).expect("replica multiple")
                    <= slack
                {
                    chosen = a;
                    break;
                }
                a += g;
            }
            if chosen == 0 {
                continue;
            }
            let warm = chosen.min(idle);
            let spun = chosen - warm;
            for _ in 0..warm {
                self.inst_idle[model].pop();
            }
            self.inst_busy[model] += warm;
            self.budget_free -= spun;
            self.inst_spinning[model] += spun;
            let rt = &mut self.jobs[i];
            rt.admitted = true;
            rt.gpus = chosen;
            rt.spun = spun;
            started.push(i);
            if spun == 0 {
                self.start_execution(i, now);
            } else {
                let mut ready = now;
                for inst in 0..spun {
                    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                        self.cfg.seed,
                        TAG_INIT_DELAY,
                        i as u64,
                        inst as u64,
                    ));
                    let d = rng.gen_range(INIT_DELAY_RANGE.0..INIT_DELAY_RANGE.1);
                    ready = ready.max(now + d);
                }
                self.push_event(ready, EventKind::GangReady(i));
            }
        }
        for i in started {
            self.pending.retain(|&p| p != i);
        }
        // Idle instances expire after the reclamation window.
        for m in 0..self.inst_idle.len() {
            let window = self.cfg.reclaim_window;
            let before = self.inst_idle[m].len();
            self.inst_idle[m].retain(|&t| now - t < window);
            self.budget_free += (before - self.inst_idle[m].len()) as u32;
        }
        Ok(())
    }

    fn tick_elasticflow(&mut self) -> Result<()> {
        let now = self.now;
        self.route_new();
        let mut order: Vec<usize> = self.pending.clone();
        let jobs = &self.jobs;
        order.sort_by(|&a, &b| {
            jobs[a]
                .job
                .remaining_slo(now)
                .total_cmp(&jobs[b].job.remaining_slo(now))
                .then(jobs[a].job.id.cmp(&jobs[b].job.id))
        });
        let cluster = self.cfg.total_gpus;
        let mut started = Vec::new();
        let mut hopeless = Vec::new();
        for i in order {
            let g = self.cfg.model(self.jobs[i].job.model).gpus_per_replica;
            let load = self.cfg.cold_transition(self.jobs[i].job.model);
            let slack = self.jobs[i].job.remaining_slo(now);
            // No runtime reuse: every start pays the full load overhead.
            let mut feasible_a = 0;
            let mut a = g;
            while a <= cluster {
                if planned_runtime(&self.jobs[i].job, a, self.cfg).expect("replica multiple")
                    + load
                    <= slack
                {
                    feasible_a = a;
                    break;
                }
                a += g;
            }
            if feasible_a == 0 {
                hopeless.push(i);
                continue;
            }
            if feasible_a > self.ef_free {
                continue;
            }
            self.ef_free -= feasible_a;
            self.ef_busy += feasible_a;
            let rt = &mut self.jobs[i];
            rt.admitted = true;
            rt.gpus = feasible_a;
            rt.start = Some(now);
            started.push(i);
            if rt.job.use_bank {
                rt.job.set_state(JobState::InBank);
                let t = now + load + rt.job.bank_time;
                self.push_event(t, EventKind::BankDone(i));
            } else {
                rt.job.set_state(JobState::Running);
                let tune = predict_time(&rt.job, feasible_a, false, self.cfg)
                    .expect("replica multiple");
                let t = now + load + tune;
                self.push_event(t, EventKind::Completion(i));
            }
        }
        for i in started {
            self.pending.retain(|&p| p != i);
        }
        for i in hopeless {
            self.pending.retain(|&p| p != i);
            self.mark_violated(i);
        }
        Ok(())
    }

    // ── accounting, invariants, report ─────────────────────────────────

    fn refresh_accounting(&mut self) {
        let n = self.cfg.models.len();
        if self.last_series.is_empty() {
            let rows = match self.policy.kind {
                PolicyKind::ElasticFlowLike => 1,
                _ => n,
            };
            self.last_series = vec![(u32::MAX, u32::MAX); rows];
        }
        let mut billed = 0u32;
        match self.policy.kind {
            PolicyKind::PromptTuner => {
                for m in 0..n {
                    let prov = self.pools[m].provisioned_present();
                    let busy = self.pools[m].busy();
                    billed += prov;
                    self.tracked_scratch[m] = self.pools[m].total_tracked();
                    if self.last_series[m] != (prov, busy) {
                        self.last_series[m] = (prov, busy);
                        self.series.push(PoolSample {
                            time_s: self.now,
                            model: self.cfg.models[m].name.clone(),
                            provisioned: prov,
                            busy,
                        });
                    }
                }
            }
            PolicyKind::InflessLike => {
                for m in 0..n {
                    let idle = self.inst_idle[m].len() as u32;
                    let busy = self.inst_busy[m];
                    let prov = idle + busy;
                    billed += prov;
                    self.tracked_scratch[m] = prov + self.inst_spinning[m];
                    if self.last_series[m] != (prov, busy) {
                        self.last_series[m] = (prov, busy);
                        self.series.push(PoolSample {
                            time_s: self.now,
                            model: self.cfg.models[m].name.clone(),
                            provisioned: prov,
                            busy,
                        });
                    }
                }
            }
            PolicyKind::ElasticFlowLike => {
                let cluster = self.cfg.total_gpus;
                billed = cluster;
                for m in 0..n {
                    self.tracked_scratch[m] = 0;
                }
                self.tracked_scratch[0] = cluster;
                if self.last_series[0] != (cluster, self.ef_busy) {
                    self.last_series[0] = (cluster, self.ef_busy);
                    self.series.push(PoolSample {
                        time_s: self.now,
                        model: "cluster".into(),
                        provisioned: cluster,
                        busy: self.ef_busy,
                    });
                }
            }
        }
        self.acc.set_billed(self.now, billed);
    }

    fn check_conservation(&self) -> Result<()> {
        let total: i64 = self.tracked_scratch.iter().map(|&x| x as i64).sum();
        let reservoir: i64 = match self.policy.kind {
            PolicyKind::PromptTuner => self.cold.remaining as i64,
            PolicyKind::InflessLike => self.budget_free as i64,
            PolicyKind::ElasticFlowLike => {
                self.ef_free as i64 + self.ef_busy as i64 - total
            }
        };
        if total + reservoir != self.cfg.total_gpus as i64 {
            return Err(self.breach(format!(
                "gpu conservation broken at t={}: tracked {} + reservoir {} != {}",
                self.now, total, reservoir, self.cfg.total_gpus
            )));
        }
        Ok(())
    }

    fn into_report(self, trace: &Trace) -> RunReport {
        let cost = &self.cfg.cost;
        let gpu_cost = self.acc.gpu_cost(cost);
        let storage_cost = self.acc.storage_cost(cost);
        let total = self.jobs.len();
        let violated = self
            .jobs
            .iter()
            .filter(|j| j.job.state == JobState::Violated)
            .count();
        let jobs: Vec<JobOutcome> = self
            .jobs
            .iter()
            .map(|rt| JobOutcome {
                job_id: rt.job.id.0,
                model: self.cfg.model(rt.job.model).name.clone(),
                task: rt.job.task.0,
                arrival: rt.job.arrival_time,
                deadline: rt.job.deadline(),
                admitted: rt.admitted,
                start: rt.start,
                finish: rt.finish,
                gpus: rt.gpus,
                bank_used: rt.bank_used,
                multiplier: rt.job.multiplier,
                violated: rt.job.state == JobState::Violated,
            })
            .collect();
        RunReport {
            policy: self.policy.label(),
            seed: self.cfg.seed,
            config_hash: self.cfg.config_hash(),
            trace_hash: trace.content_hash(),
            s: trace.s,
            label: trace.label.clone(),
            total_jobs: total,
            violated_jobs: violated,
            slo_violation_pct: if total == 0 {
                0.0
            } else {
                violated as f64 / total as f64 * 100.0
            },
            gpu_cost_dollars: gpu_cost,
            storage_cost_dollars: storage_cost,
            cost_dollars: gpu_cost + storage_cost,
            horizon_s: self.now,
            config: self.cfg.clone(),
            jobs,
            pool_series: self.series,
        }
    }
}
