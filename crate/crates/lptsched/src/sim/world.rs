//! The synthetic prompt-quality world behind the simulator.
//!
//! Real deployments extract activation features with a live LLM; here the
//! ground truth is generated. Tasks belong to families (datasets split
//! into partitions) with a hidden ideal feature vector per task, and bank
//! candidates are anchored near family centers with varying tightness.
//! The quality of a prompt for a task is a fixed function of feature-space
//! cosine similarity, and its ITA multiplier follows from quality, so the
//! score metric genuinely ranks prompts the way their iteration counts
//! would.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bank::{EvalSet, PromptCandidate, PromptIndex, SyntheticScorer};
use crate::config::BankConfig;
use crate::error::Result;
use crate::job::TaskId;
use crate::util::stream_seed;

const TAG_FAMILY: u64 = 1;
const TAG_TASK: u64 = 2;
const TAG_CANDIDATE: u64 = 3;
const TAG_USER_PROMPT: u64 = 4;
const TAG_TASK_TIME: u64 = 5;

/// How tightly a task's ideal vector hugs its family center.
const TASK_FAMILY_WEIGHT: f64 = 0.85;
/// Candidate anchoring weight range: how close bank candidates sit to
/// their family center.
const CANDIDATE_ANCHOR: (f64, f64) = (0.55, 0.95);

/// Ground-truth iterations-to-accuracy model for one job: the ideal
/// prompt needs `base_iters`; a prompt of quality q needs
/// `1 + span * (1 - q)` times as many.
#[derive(Debug, Clone, Copy)]
pub struct ItaProfile {
    pub base_iters: u64,
    pub span: f64,
}

impl ItaProfile {
    pub fn multiplier_for_quality(&self, q: f64) -> f64 {
        1.0 + self.span * (1.0 - q).max(0.0)
    }

    /// Worst multiplier any prompt can have (quality 0).
    pub fn max_multiplier(&self) -> f64 {
        1.0 + self.span
    }
}

#[derive(Debug, Clone)]
struct TaskInfo {
    family: usize,
    ideal: Vec<f64>,
}

/// Deterministic task/feature generator shared by trace construction,
/// bank building and the in-sim scorers.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    dim: usize,
    sigma: f64,
    span: f64,
    eval_samples: usize,
    seed: u64,
    families: Vec<Vec<f64>>,
    tasks: Vec<TaskInfo>,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn mix_toward(center: &[f64], noise: &[f64], weight: f64) -> Vec<f64> {
    let mut v: Vec<f64> = center
        .iter()
        .zip(noise)
        .map(|(c, n)| weight * c + (1.0 - weight) * n)
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

impl SyntheticWorld {
    pub fn new(bank: &BankConfig, seed: u64) -> Self {
        let dim = bank.feature_dim;
        let families: Vec<Vec<f64>> = (0..bank.task_families)
            .map(|f| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(stream_seed(seed, TAG_FAMILY, f as u64, 0));
                random_unit(&mut rng, dim)
            })
            .collect();
        let tasks = (0..bank.tasks)
            .map(|t| {
                let family = t % bank.task_families;
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, TAG_TASK, t as u64, 0));
                let noise = random_unit(&mut rng, dim);
                TaskInfo {
                    family,
                    ideal: mix_toward(&families[family], &noise, TASK_FAMILY_WEIGHT),
                }
            })
            .collect();
        Self {
            dim,
            sigma: bank.noise_sigma,
            span: bank.ita_span,
            eval_samples: bank.eval_samples,
            seed,
            families,
            tasks,
        }
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn family_of(&self, task: TaskId) -> usize {
        self.tasks[task.0 as usize].family
    }

    pub fn ita(&self, base_iters: u64) -> ItaProfile {
        ItaProfile {
            base_iters,
            span: self.span,
        }
    }

    /// Generate `n` candidates anchored round-robin to the task families.
    /// Anchoring targets the family center, not a specific task: prompts
    /// transfer within a dataset family.
    pub fn candidates(&self, n: usize) -> Vec<PromptCandidate> {
        let family_count = self.families.len();
        (0..n)
            .map(|i| {
                let family = i % family_count;
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                    self.seed,
                    TAG_CANDIDATE,
                    i as u64,
                    0,
                ));
                let anchor = rng.gen_range(CANDIDATE_ANCHOR.0..CANDIDATE_ANCHOR.1);
                let noise = random_unit(&mut rng, self.dim);
                let features = mix_toward(&self.families[family], &noise, anchor);
                PromptCandidate::new(i as u64, format!("prompt-f{family}-{i}"), features)
                    .expect("mix_toward normalizes")
            })
            .collect()
    }

    /// Build the two-layer index over a fresh candidate set.
    pub fn build_index(&self, k: usize, capacity: usize) -> Result<PromptIndex> {
        PromptIndex::build(self.candidates(capacity), k, capacity, self.seed)
    }

    /// Score-noise-bearing scorer for one task.
    pub fn scorer(&self, task: TaskId) -> SyntheticScorer {
        self.scorer_with_sigma(task, self.sigma)
    }

    pub fn scorer_with_sigma(&self, task: TaskId, sigma: f64) -> SyntheticScorer {
        let info = &self.tasks[task.0 as usize];
        SyntheticScorer::new(
            info.ideal.clone(),
            sigma,
            stream_seed(self.seed, TAG_TASK, task.0 as u64, 1),
        )
    }

    pub fn eval_set(&self, task: TaskId) -> EvalSet {
        EvalSet::synthetic(task.0, self.eval_samples).expect("eval_samples >= 1")
    }

    /// Ground-truth quality of a feature vector for a task.
    pub fn quality(&self, task: TaskId, features: &[f64]) -> f64 {
        let ideal = &self.tasks[task.0 as usize].ideal;
        let dot: f64 = features.iter().zip(ideal).map(|(a, b)| a * b).sum();
        (1.0 + dot) / 2.0
    }

    /// True ITA multiplier of a candidate prompt for a task.
    pub fn candidate_multiplier(&self, task: TaskId, cand: &PromptCandidate) -> f64 {
        self.ita(1).multiplier_for_quality(self.quality(task, &cand.features))
    }

    /// The user-supplied initial prompt for a job: a random feature vector,
    /// i.e. no curation toward the task.
    pub fn default_prompt(&self, task: TaskId, salt: u64) -> PromptCandidate {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
            self.seed,
            TAG_USER_PROMPT,
            task.0 as u64,
            salt,
        ));
        let features = random_unit(&mut rng, self.dim);
        PromptCandidate::new(1 << 62 | salt, format!("user-prompt-{salt}"), features)
            .expect("random_unit is normalized")
    }

    /// Nominal GPU-seconds of work for a task at the ideal prompt;
    /// log-uniform between a few seconds and a few minutes.
    pub fn task_gpu_time(&self, task: TaskId, lo: f64, hi: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
            self.seed,
            TAG_TASK_TIME,
            task.0 as u64,
            0,
        ));
        (rng.gen_range(lo.ln()..hi.ln())).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::score;

    fn world() -> SyntheticWorld {
        SyntheticWorld::new(&BankConfig::default(), 42)
    }

    #[test]
    fn deterministic_per_seed() {
        let w1 = world();
        let w2 = world();
        let c1 = w1.candidates(10);
        let c2 = w2.candidates(10);
        assert_eq!(c1, c2);
        assert_eq!(
            w1.default_prompt(TaskId(3), 9),
            w2.default_prompt(TaskId(3), 9)
        );
    }

    #[test]
    fn ideal_prompt_attains_multiplier_one() {
        let w = world();
        let ita = w.ita(100);
        assert_eq!(ita.multiplier_for_quality(1.0), 1.0);
        assert_eq!(ita.max_multiplier(), 4.0);
    }

    /// The bank-wide multiplier distribution per task: median and max land
    /// in the characterized 1.7-4.5x band over the per-task minimum.
    #[test]
    fn multiplier_spread_matches_characterization() {
        let w = world();
        let cands = w.candidates(3000);
        for t in (0..w.task_count()).step_by(7) {
            let task = TaskId(t as u32);
            let mut mults: Vec<f64> = cands
                .iter()
                .map(|c| w.candidate_multiplier(task, c))
                .collect();
            mults.sort_by(f64::total_cmp);
            let min = mults[0];
            let median = mults[mults.len() / 2];
            let max = *mults.last().unwrap();
            assert!(min >= 1.0);
            let med_ratio = median / min;
            let max_ratio = max / min;
            assert!(
                (1.7..=4.5).contains(&med_ratio),
                "task {t}: median/min = {med_ratio}"
            );
            assert!(
                (1.7..=4.5).contains(&max_ratio),
                "task {t}: max/min = {max_ratio}"
            );
        }
    }

    #[test]
    fn noiseless_score_tracks_quality_rank() {
        let w = world();
        let task = TaskId(5);
        let scorer = w.scorer_with_sigma(task, 0.0);
        let eval = w.eval_set(task);
        let cands = w.candidates(50);
        for pair in cands.windows(2) {
            let s0 = score(&pair[0], &eval, &scorer).unwrap();
            let s1 = score(&pair[1], &eval, &scorer).unwrap();
            let q0 = w.quality(task, &pair[0].features);
            let q1 = w.quality(task, &pair[1].features);
            assert_eq!(s0 < s1, q0 > q1, "score must rank by true quality");
        }
    }

    #[test]
    fn task_gpu_times_within_bounds() {
        let w = world();
        for t in 0..w.task_count() {
            let g = w.task_gpu_time(TaskId(t as u32), 8.0, 240.0);
            assert!((8.0..=240.0).contains(&g));
        }
    }
}
