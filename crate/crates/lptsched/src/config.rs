//! Configuration: model table, pricing, timing knobs and bank settings.
//!
//! Everything is serde-backed so a run can echo its fully resolved
//! configuration (defaults included) into the report header. `resolve()`
//! fills per-model gaps from the global defaults and validates.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Index into [`SimConfig::models`]. Jobs and pools refer to models by this
/// handle; the spec data (name, parallelism, timings) lives in [`ModelSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelId(pub usize);

/// One hosted LLM: its name, how many GPUs one replica spans, and the
/// profiled per-model timings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// 1 for single-GPU models; 4 models tensor-parallel hosting.
    #[serde(default = "default_one")]
    pub gpus_per_replica: u32,
    /// Seconds per tuning iteration on one replica.
    #[serde(default = "default_iter_time")]
    pub iter_time_s: f64,
    /// Warm-up cost of moving a cold GPU into this model's warm pool.
    /// `None` falls back to the global `cold_transition_time`.
    #[serde(default)]
    pub cold_transition_s: Option<f64>,
}

fn default_one() -> u32 {
    1
}
fn default_iter_time() -> f64 {
    1.0
}

/// Linear-scaling execution-time model. Communication overhead for prompt
/// tuning is in the 0.4-0.5% range, so throughput is near-linear in the
/// replica count.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExecTimeModel {
    /// Fractional slowdown charged per iteration for gradient exchange.
    pub comm_fraction: f64,
    /// Profiled share of end-to-end latency spent on GPU allocation.
    /// Reference statistic only; no computation reads it.
    pub alloc_overhead_fraction: f64,
}

impl Default for ExecTimeModel {
    fn default() -> Self {
        Self {
            comm_fraction: 0.005,
            alloc_overhead_fraction: 0.39,
        }
    }
}

/// Dollar rates. The GPU rate defaults to the AWS p4de.24xlarge hourly
/// price divided by its 8 GPUs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostModel {
    pub gpu_price_per_hour: f64,
    pub storage_price_per_gb_hour: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            gpu_price_per_hour: 40.96 / 8.0,
            storage_price_per_gb_hour: 0.02,
        }
    }
}

/// Prompt-bank settings: the two-layer index shape plus the synthetic
/// feature/quality world used in place of live LLM scoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankConfig {
    /// Cluster count K of the two-layer index.
    pub clusters: usize,
    /// Replacement threshold: max candidates held.
    pub capacity: usize,
    /// Evaluation samples per score computation.
    pub eval_samples: usize,
    /// Dimension of candidate feature vectors.
    pub feature_dim: usize,
    /// Wall-clock cost of one score evaluation on the job's GPUs.
    pub per_eval_cost_s: f64,
    /// Std-dev of the synthetic scorer's loss noise.
    pub noise_sigma: f64,
    /// ITA multiplier reach: multiplier = 1 + span * (1 - quality).
    pub ita_span: f64,
    /// Number of synthetic tasks (dataset partitions).
    pub tasks: usize,
    /// Number of task families (datasets); tasks in a family share prompts.
    pub task_families: usize,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            clusters: 50,
            capacity: 3000,
            eval_samples: 16,
            feature_dim: 64,
            per_eval_cost_s: 0.07,
            noise_sigma: 0.05,
            ita_span: 3.0,
            tasks: 120,
            task_families: 12,
        }
    }
}

/// Full run configuration. Field names match the config file keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub models: Vec<ModelSpec>,
    #[serde(flatten)]
    pub exec: ExecTimeModel,
    #[serde(flatten)]
    pub cost: CostModel,
    /// Scheduling round interval.
    pub tick_interval: f64,
    /// Idle window after which a warm GPU returns to the cold pool.
    pub reclaim_window: f64,
    /// Global default for per-model cold transition latency.
    pub cold_transition_time: f64,
    /// Share of a job's SLO the scheduler may spend on the bank phase.
    pub latency_budget_fraction: f64,
    /// Allocation overhead added onto duration*S when deriving SLOs.
    pub slo_alloc_overhead: f64,
    pub seed: u64,
    /// Size of the shared cold reservoir (total GPUs the system may hold).
    pub total_gpus: u32,
    /// Transfer-data footprint billed per running job.
    pub storage_gb_per_job: f64,
    pub bank: BankConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            models: vec![
                ModelSpec {
                    name: "gpt2-base".into(),
                    gpus_per_replica: 1,
                    iter_time_s: 0.5,
                    cold_transition_s: None,
                },
                ModelSpec {
                    name: "gpt2-large".into(),
                    gpus_per_replica: 1,
                    iter_time_s: 0.8,
                    cold_transition_s: None,
                },
                ModelSpec {
                    name: "vicuna-7b".into(),
                    gpus_per_replica: 1,
                    iter_time_s: 1.5,
                    cold_transition_s: None,
                },
            ],
            exec: ExecTimeModel::default(),
            cost: CostModel::default(),
            tick_interval: 0.05,
            reclaim_window: 60.0,
            cold_transition_time: 30.0,
            latency_budget_fraction: 0.20,
            slo_alloc_overhead: 15.0,
            seed: 42,
            total_gpus: 32,
            storage_gb_per_job: 0.1,
            bank: BankConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn model(&self, id: ModelId) -> &ModelSpec {
        &self.models[id.0]
    }

    pub fn model_by_name(&self, name: &str) -> Result<ModelId> {
        self.models
            .iter()
            .position(|m| m.name == name)
            .map(ModelId)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    /// Cold transition latency for a model (per-model override or global).
    pub fn cold_transition(&self, id: ModelId) -> f64 {
        self.model(id)
            .cold_transition_s
            .unwrap_or(self.cold_transition_time)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path)?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("no models configured".into()));
        }
        for (i, m) in self.models.iter().enumerate() {
            if m.gpus_per_replica == 0 {
                return Err(Error::InvalidConfig(format!(
                    "model '{}': gpus_per_replica must be >= 1",
                    m.name
                )));
            }
            if m.iter_time_s <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "model '{}': iter_time_s must be positive",
                    m.name
                )));
            }
            if self.models[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate model name '{}'",
                    m.name
                )));
            }
        }
        if self.tick_interval <= 0.0 {
            return Err(Error::InvalidConfig("tick_interval must be positive".into()));
        }
        if !(self.latency_budget_fraction > 0.0 && self.latency_budget_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "latency_budget_fraction must lie in (0, 1)".into(),
            ));
        }
        if !(0.0..=0.01).contains(&self.exec.comm_fraction) {
            return Err(Error::InvalidConfig(
                "comm_fraction must lie in [0, 0.01]".into(),
            ));
        }
        if self.cost.gpu_price_per_hour < 0.0 || self.cost.storage_price_per_gb_hour < 0.0 {
            return Err(Error::InvalidConfig("prices must be nonnegative".into()));
        }
        if self.reclaim_window <= 0.0 {
            return Err(Error::InvalidConfig("reclaim_window must be positive".into()));
        }
        if self.bank.clusters == 0 || self.bank.capacity == 0 {
            return Err(Error::InvalidConfig(
                "bank.clusters and bank.capacity must be >= 1".into(),
            ));
        }
        if self.bank.eval_samples == 0 {
            return Err(Error::InvalidConfig("bank.eval_samples must be >= 1".into()));
        }
        if self.bank.tasks == 0 || self.bank.task_families == 0 {
            return Err(Error::InvalidConfig(
                "bank.tasks and bank.task_families must be >= 1".into(),
            ));
        }
        if self.bank.feature_dim == 0 {
            return Err(Error::InvalidConfig("bank.feature_dim must be >= 1".into()));
        }
        if self.bank.per_eval_cost_s <= 0.0 {
            return Err(Error::InvalidConfig(
                "bank.per_eval_cost_s must be positive".into(),
            ));
        }
        if self.bank.noise_sigma < 0.0 || self.bank.ita_span < 0.0 {
            return Err(Error::InvalidConfig(
                "bank.noise_sigma and bank.ita_span must be nonnegative".into(),
            ));
        }
        if self.cold_transition_time < 0.0
            || self.models.iter().any(|m| m.cold_transition_s.is_some_and(|t| t < 0.0))
        {
            return Err(Error::InvalidConfig(
                "cold transition times must be nonnegative".into(),
            ));
        }
        if self.slo_alloc_overhead < 0.0 || self.storage_gb_per_job < 0.0 {
            return Err(Error::InvalidConfig(
                "slo_alloc_overhead and storage_gb_per_job must be nonnegative".into(),
            ));
        }
        for m in &self.models {
            if m.name.is_empty() || m.name.contains(',') || m.name.contains(char::is_whitespace) {
                return Err(Error::InvalidConfig(format!(
                    "model name '{}' must be nonempty without commas or whitespace",
                    m.name
                )));
            }
        }
        Ok(())
    }

    /// Hex digest of the resolved configuration. Reports carry it so equal
    /// hashes imply byte-identical outputs for the same trace and policy.
    pub fn config_hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        let d = h.finalize();
        let mut s = String::with_capacity(16);
        for b in &d[..8] {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn duplicate_model_names_rejected() {
        let mut cfg = SimConfig::default();
        cfg.models[1].name = cfg.models[0].name.clone();
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn per_model_cold_transition_overrides_global() {
        let mut cfg = SimConfig::default();
        cfg.models[0].cold_transition_s = Some(12.0);
        assert_eq!(cfg.cold_transition(ModelId(0)), 12.0);
        assert_eq!(cfg.cold_transition(ModelId(1)), 30.0);
    }

    #[test]
    fn json_roundtrip_preserves_hash() {
        let cfg = SimConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        let back = SimConfig::from_json(&s).unwrap();
        assert_eq!(cfg.config_hash(), back.config_hash());
    }

    #[test]
    fn zero_latency_budget_rejected() {
        let mut cfg = SimConfig::default();
        cfg.latency_budget_fraction = 0.0;
        assert!(cfg.validate().is_err());
        cfg.latency_budget_fraction = 1.0;
        assert!(cfg.validate().is_err());
    }
}
