//! Trace records and the seeded workload generator.
//!
//! A trace is minute-granular arrival counts turned into exact arrival
//! timestamps: within each minute, gaps follow a seeded exponential
//! distribution rescaled so the minute holds exactly its count. The
//! bundled presets reproduce the characterized load shape: a 20-minute
//! window with one spike minute carrying 5x the mean rate.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::job::TaskId;
use crate::sim::world::SyntheticWorld;
use crate::util::stream_seed;

const TAG_ARRIVALS: u64 = 10;
const TAG_TASK_PICK: u64 = 11;
const TAG_PEAK: u64 = 12;

/// Job durations in the characterized traces run from a few seconds to a
/// few minutes; task nominal GPU-times are drawn log-uniform over this.
pub const TASK_GPU_TIME_RANGE: (f64, f64) = (8.0, 240.0);

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub submit_time_s: f64,
    pub model: String,
    pub gpu_time_s: f64,
    pub task_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub seed: u64,
    /// SLO emergence multiplier recorded at generation time.
    pub s: f64,
    pub label: String,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    /// Last submit time; 0 for an empty trace.
    pub fn horizon_s(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.submit_time_s)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#lpt-trace seed={} S={} label={}\n",
            self.seed, self.s, self.label
        );
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.submit_time_s, r.model, r.gpu_time_s, r.task_id
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::MalformedTrace {
            line: 1,
            msg: "empty file".into(),
        })?;
        let header = header.strip_prefix("#lpt-trace ").ok_or(Error::MalformedTrace {
            line: 1,
            msg: "missing '#lpt-trace' header".into(),
        })?;
        let mut seed = None;
        let mut s = None;
        let mut label = None;
        for field in header.split_whitespace() {
            if let Some(v) = field.strip_prefix("seed=") {
                seed = v.parse::<u64>().ok();
            } else if let Some(v) = field.strip_prefix("S=") {
                s = v.parse::<f64>().ok();
            } else if let Some(v) = field.strip_prefix("label=") {
                label = Some(v.to_string());
            }
        }
        let (seed, s, label) = match (seed, s, label) {
            (Some(seed), Some(s), Some(label)) => (seed, s, label),
            _ => {
                return Err(Error::MalformedTrace {
                    line: 1,
                    msg: "header needs seed=, S= and label= fields".into(),
                })
            }
        };
        let mut records = Vec::new();
        let mut last_t = f64::NEG_INFINITY;
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(Error::MalformedTrace {
                    line: lineno,
                    msg: format!("expected 4 comma-separated fields, got {}", parts.len()),
                });
            }
            let submit_time_s: f64 = parts[0].parse().map_err(|_| Error::MalformedTrace {
                line: lineno,
                msg: format!("bad submit_time_s '{}'", parts[0]),
            })?;
            let gpu_time_s: f64 = parts[2].parse().map_err(|_| Error::MalformedTrace {
                line: lineno,
                msg: format!("bad gpu_time_s '{}'", parts[2]),
            })?;
            let task_id: u32 = parts[3].parse().map_err(|_| Error::MalformedTrace {
                line: lineno,
                msg: format!("bad task_id '{}'", parts[3]),
            })?;
            if gpu_time_s <= 0.0 {
                return Err(Error::MalformedTrace {
                    line: lineno,
                    msg: "gpu_time_s must be positive".into(),
                });
            }
            if submit_time_s < last_t {
                return Err(Error::MalformedTrace {
                    line: lineno,
                    msg: "records must be sorted by submit time".into(),
                });
            }
            last_t = submit_time_s;
            records.push(TraceRecord {
                submit_time_s,
                model: parts[1].to_string(),
                gpu_time_s,
                task_id,
            });
        }
        Ok(Self {
            seed,
            s,
            label,
            records,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Digest of the canonical text form; report headers carry it.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        let d = h.finalize();
        let mut s = String::with_capacity(16);
        for b in &d[..8] {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }
}

/// Per-model, per-minute request counts driving the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePlan {
    /// Outer index: model position in the config; inner: minute.
    pub per_model_minute_counts: Vec<Vec<u32>>,
}

/// The three bundled load levels: total requests per model over a
/// 20-minute window, matching the evaluation workloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadPreset {
    Low,
    Medium,
    High,
}

impl LoadPreset {
    pub fn totals(self) -> [u32; 3] {
        match self {
            LoadPreset::Low => [41, 55, 42],
            LoadPreset::Medium => [77, 71, 65],
            LoadPreset::High => [99, 85, 76],
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "low" => Some(LoadPreset::Low),
            "medium" => Some(LoadPreset::Medium),
            "high" => Some(LoadPreset::High),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LoadPreset::Low => "low",
            LoadPreset::Medium => "medium",
            LoadPreset::High => "high",
        }
    }
}

pub const PRESET_MINUTES: usize = 20;
/// Spike height over the mean per-minute rate in the characterized trace.
pub const PEAK_OVER_MEAN: f64 = 5.0;

/// Spread `total` requests over `minutes` with one peak minute at
/// 5x the mean and the remainder near-uniform.
fn spiky_minute_counts(total: u32, minutes: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut counts = vec![0u32; minutes];
    if total == 0 {
        return counts;
    }
    let mean = total as f64 / minutes as f64;
    let peak = ((PEAK_OVER_MEAN * mean).round() as u32).min(total);
    let peak_minute = rng.gen_range(0..minutes);
    counts[peak_minute] = peak;
    let rest = total - peak;
    let others = minutes - 1;
    let base = rest / others as u32;
    let mut rem = rest as usize % others;
    for (m, c) in counts.iter_mut().enumerate() {
        if m == peak_minute {
            continue;
        }
        *c = base;
        if rem > 0 {
            *c += 1;
            rem -= 1;
        }
    }
    counts
}

/// Bundled rate plan for a preset, cycling the preset totals over the
/// configured model list.
pub fn preset_rates(preset: LoadPreset, n_models: usize, seed: u64) -> RatePlan {
    let totals = preset.totals();
    let per_model_minute_counts = (0..n_models)
        .map(|m| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(stream_seed(seed, TAG_PEAK, m as u64, 0));
            spiky_minute_counts(totals[m % totals.len()], PRESET_MINUTES, &mut rng)
        })
        .collect();
    RatePlan {
        per_model_minute_counts,
    }
}

/// Turn minute counts into a trace. Within a minute holding n arrivals,
/// n+1 exponential gaps are drawn and rescaled so all n arrivals land
/// inside the minute; each record picks a task uniformly and takes that
/// task's nominal GPU-time.
pub fn generate_trace(
    rates: &RatePlan,
    cfg: &SimConfig,
    world: &SyntheticWorld,
    s: f64,
    label: &str,
    seed: u64,
) -> Result<Trace> {
    if rates.per_model_minute_counts.len() > cfg.models.len() {
        return Err(Error::InvalidConfig(format!(
            "rate plan covers {} models but config has {}",
            rates.per_model_minute_counts.len(),
            cfg.models.len()
        )));
    }
    let mut records: Vec<TraceRecord> = Vec::new();
    for (m, minutes) in rates.per_model_minute_counts.iter().enumerate() {
        let model_name = &cfg.models[m].name;
        for (minute, &count) in minutes.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                seed,
                TAG_ARRIVALS,
                m as u64,
                minute as u64,
            ));
            let gaps: Vec<f64> = (0..=count)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let total: f64 = gaps.iter().sum();
            let mut acc = 0.0;
            for gap in gaps.iter().take(count as usize) {
                acc += gap;
                let t = minute as f64 * 60.0 + 60.0 * acc / total;
                let mut task_rng = ChaCha8Rng::seed_from_u64(stream_seed(
                    seed,
                    TAG_TASK_PICK,
                    m as u64,
                    records.len() as u64,
                ));
                let task = task_rng.gen_range(0..world.task_count()) as u32;
                let gpu_time = world.task_gpu_time(
                    TaskId(task),
                    TASK_GPU_TIME_RANGE.0,
                    TASK_GPU_TIME_RANGE.1,
                );
                records.push(TraceRecord {
                    submit_time_s: t,
                    model: model_name.clone(),
                    gpu_time_s: gpu_time,
                    task_id: task,
                });
            }
        }
    }
    records.sort_by(|a, b| {
        a.submit_time_s
            .total_cmp(&b.submit_time_s)
            .then_with(|| a.model.cmp(&b.model))
            .then_with(|| a.task_id.cmp(&b.task_id))
    });
    Ok(Trace {
        seed,
        s,
        label: label.to_string(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;

    fn world(cfg: &SimConfig) -> SyntheticWorld {
        SyntheticWorld::new(&cfg.bank, cfg.seed)
    }

    #[test]
    fn zero_rates_give_empty_trace() {
        let cfg = SimConfig::default();
        let w = world(&cfg);
        let rates = RatePlan {
            per_model_minute_counts: vec![vec![0; 20]; 3],
        };
        let t = generate_trace(&rates, &cfg, &w, 1.0, "empty", 1).unwrap();
        assert!(t.records.is_empty());
        assert_eq!(t.horizon_s(), 0.0);
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = SimConfig::default();
        let w = world(&cfg);
        let rates = preset_rates(LoadPreset::Medium, cfg.models.len(), 7);
        let t1 = generate_trace(&rates, &cfg, &w, 1.0, "m", 7).unwrap();
        let t2 = generate_trace(&rates, &cfg, &w, 1.0, "m", 7).unwrap();
        assert_eq!(t1, t2);
        let t3 = generate_trace(&rates, &cfg, &w, 1.0, "m", 8).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn preset_counts_preserved_and_spiky() {
        let cfg = SimConfig::default();
        let w = world(&cfg);
        for preset in [LoadPreset::Low, LoadPreset::Medium, LoadPreset::High] {
            let rates = preset_rates(preset, cfg.models.len(), 3);
            for (m, minutes) in rates.per_model_minute_counts.iter().enumerate() {
                let total: u32 = minutes.iter().sum();
                assert_eq!(total, preset.totals()[m % 3]);
                let mean = total as f64 / minutes.len() as f64;
                let max = *minutes.iter().max().unwrap() as f64;
                assert!(
                    (max / mean - PEAK_OVER_MEAN).abs() <= 0.5,
                    "{preset:?} model {m}: peak/mean {}",
                    max / mean
                );
            }
            let t = generate_trace(&rates, &cfg, &w, 1.0, preset.name(), 3).unwrap();
            let total: usize = preset.totals().iter().map(|&x| x as usize).sum();
            assert_eq!(t.records.len(), total);
        }
    }

    #[test]
    fn arrivals_stay_within_their_minute_and_sorted() {
        let cfg = SimConfig::default();
        let w = world(&cfg);
        let rates = preset_rates(LoadPreset::High, cfg.models.len(), 11);
        let t = generate_trace(&rates, &cfg, &w, 1.0, "high", 11).unwrap();
        for pair in t.records.windows(2) {
            assert!(pair[0].submit_time_s <= pair[1].submit_time_s);
        }
        for r in &t.records {
            assert!(r.submit_time_s >= 0.0 && r.submit_time_s < 20.0 * 60.0);
            assert!(r.gpu_time_s > 0.0);
        }
    }

    #[test]
    fn text_roundtrip() {
        let cfg = SimConfig::default();
        let w = world(&cfg);
        let rates = preset_rates(LoadPreset::Low, cfg.models.len(), 5);
        let t = generate_trace(&rates, &cfg, &w, 1.5, "low", 5).unwrap();
        let text = t.to_text();
        let back = Trace::parse(&text).unwrap();
        assert_eq!(t, back);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn malformed_lines_name_their_line_number() {
        let bad = "#lpt-trace seed=1 S=1 label=x\n1.0,gpt2-base,nope,3\n";
        match Trace::parse(bad) {
            Err(Error::MalformedTrace { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedTrace, got {other:?}"),
        }
        let unsorted = "#lpt-trace seed=1 S=1 label=x\n5.0,m,1.0,0\n1.0,m,1.0,0\n";
        match Trace::parse(unsorted) {
            Err(Error::MalformedTrace { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected MalformedTrace, got {other:?}"),
        }
    }
}
