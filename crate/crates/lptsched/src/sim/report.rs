//! Run reports: per-job outcomes, aggregate SLO violation and dollar
//! cost, and the pool-size time series the cost integral is derived from.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{CostModel, SimConfig};
use crate::error::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobOutcome {
    pub job_id: u64,
    pub model: String,
    pub task: u32,
    pub arrival: f64,
    pub deadline: f64,
    pub admitted: bool,
    pub start: Option<f64>,
    pub finish: Option<f64>,
    pub gpus: u32,
    pub bank_used: bool,
    /// ITA multiplier of the prompt the job actually tuned with.
    pub multiplier: f64,
    pub violated: bool,
}

/// One step of a pool's (provisioned, busy) series; rows appear whenever
/// either value changes and hold until the next row for the same model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolSample {
    pub time_s: f64,
    pub model: String,
    pub provisioned: u32,
    pub busy: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: String,
    pub seed: u64,
    pub config_hash: String,
    pub trace_hash: String,
    pub s: f64,
    pub label: String,
    pub total_jobs: usize,
    pub violated_jobs: usize,
    pub slo_violation_pct: f64,
    pub gpu_cost_dollars: f64,
    pub storage_cost_dollars: f64,
    pub cost_dollars: f64,
    pub horizon_s: f64,
    /// The fully resolved configuration the run used, defaults included.
    pub config: SimConfig,
    pub jobs: Vec<JobOutcome>,
    pub pool_series: Vec<PoolSample>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Write report.json, jobs.csv and pools.csv under `out_dir`.
    pub fn write_files(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join("report.json"), self.to_json()?)?;

        let mut jobs = String::new();
        jobs.push_str(&format!(
            "# seed={} config={} trace={} policy={}\n",
            self.seed, self.config_hash, self.trace_hash, self.policy
        ));
        jobs.push_str(
            "job_id,model,task,arrival,deadline,admitted,start,finish,gpus,bank_used,multiplier,violated\n",
        );
        for j in &self.jobs {
            jobs.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                j.job_id,
                j.model,
                j.task,
                j.arrival,
                j.deadline,
                j.admitted,
                j.start.map_or(String::new(), |v| v.to_string()),
                j.finish.map_or(String::new(), |v| v.to_string()),
                j.gpus,
                j.bank_used,
                j.multiplier,
                j.violated
            ));
        }
        let mut f = fs::File::create(out_dir.join("jobs.csv"))?;
        f.write_all(jobs.as_bytes())?;

        let mut pools = String::new();
        pools.push_str(&format!(
            "# seed={} config={} trace={} policy={}\n",
            self.seed, self.config_hash, self.trace_hash, self.policy
        ));
        pools.push_str("time_s,model,provisioned,busy\n");
        for p in &self.pool_series {
            pools.push_str(&format!(
                "{},{},{},{}\n",
                p.time_s, p.model, p.provisioned, p.busy
            ));
        }
        let mut f = fs::File::create(out_dir.join("pools.csv"))?;
        f.write_all(pools.as_bytes())?;
        Ok(())
    }
}

/// Integrates billed GPU count over virtual time plus storage GB-hours.
/// Cold GPUs are free to hold; only warm-present GPUs accrue cost.
#[derive(Debug, Clone, Default)]
pub struct CostAccumulator {
    last_t: f64,
    billed_gpus: u32,
    pub gpu_seconds: f64,
    pub storage_gb_hours: f64,
}

impl CostAccumulator {
    /// Advance to `now`, accruing the current billed count over the gap.
    pub fn advance(&mut self, now: f64) {
        debug_assert!(now + 1e-9 >= self.last_t, "time went backwards");
        if now > self.last_t {
            self.gpu_seconds += self.billed_gpus as f64 * (now - self.last_t);
            self.last_t = now;
        }
    }

    pub fn set_billed(&mut self, now: f64, gpus: u32) {
        self.advance(now);
        self.billed_gpus = gpus;
    }

    pub fn billed(&self) -> u32 {
        self.billed_gpus
    }

    pub fn add_storage(&mut self, gb: f64, seconds: f64) {
        self.storage_gb_hours += gb * seconds / 3600.0;
    }

    pub fn gpu_cost(&self, cost: &CostModel) -> f64 {
        self.gpu_seconds / 3600.0 * cost.gpu_price_per_hour
    }

    pub fn storage_cost(&self, cost: &CostModel) -> f64 {
        self.storage_gb_hours * cost.storage_price_per_gb_hour
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_integral() {
        // 2 GPUs for one hour at $5/GPU-hour.
        let mut acc = CostAccumulator::default();
        acc.set_billed(0.0, 2);
        acc.advance(3600.0);
        let cost = CostModel {
            gpu_price_per_hour: 5.0,
            storage_price_per_gb_hour: 0.0,
        };
        assert!((acc.gpu_cost(&cost) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn step_function_integral_matches_rectangles() {
        let mut acc = CostAccumulator::default();
        // 0 -> 1 -> 2 -> 3 -> 4 GPUs in 10 s steps.
        for (t, g) in [(0.0, 1u32), (10.0, 2), (20.0, 3), (30.0, 4)] {
            acc.set_billed(t, g);
        }
        acc.advance(40.0);
        let expected = 10.0 * (1 + 2 + 3 + 4) as f64;
        assert!((acc.gpu_seconds - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_warm_time_costs_only_storage() {
        let mut acc = CostAccumulator::default();
        acc.advance(100.0);
        acc.add_storage(2.0, 1800.0);
        let cost = CostModel {
            gpu_price_per_hour: 5.0,
            storage_price_per_gb_hour: 0.1,
        };
        assert_eq!(acc.gpu_cost(&cost), 0.0);
        assert!((acc.storage_cost(&cost) - 0.1).abs() < 1e-12);
    }
}
