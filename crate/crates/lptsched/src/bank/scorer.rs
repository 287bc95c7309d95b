//! Prompt scoring: average loss over a small evaluation set.
//!
//! The `Scorer` abstracts the loss L(concat(p, input), target). Production
//! deployments would back it with a live LLM; the bundled
//! [`SyntheticScorer`] derives a ground-truth prompt quality from feature
//! space so that score ranks prompts the way their true ITA would, which
//! makes the index testable end to end without a model.

use std::cell::Cell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EvalSample, EvalSet, PromptCandidate};
use crate::error::{Error, Result};

pub trait Scorer {
    /// Loss of `prompt` on one sample; nonnegative, deterministic given
    /// (prompt, sample) and the scorer's own seed.
    fn loss(&self, prompt: &PromptCandidate, sample: &EvalSample) -> f64;
}

/// Average loss of `p` over the evaluation set; smaller is better.
pub fn score<S: Scorer + ?Sized>(p: &PromptCandidate, eval: &EvalSet, scorer: &S) -> Result<f64> {
    if eval.samples.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let total: f64 = eval.samples.iter().map(|s| scorer.loss(p, s)).sum();
    Ok(total / eval.samples.len() as f64)
}

/// Ground-truth-backed scorer for one task.
///
/// Quality q(p) = (1 + cos(p, ideal)) / 2 maps cosine similarity against a
/// hidden task-ideal vector into [0, 1]; the per-sample loss is
/// (1 - q) plus seeded Gaussian noise, clamped at zero.
#[derive(Debug, Clone)]
pub struct SyntheticScorer {
    ideal: Vec<f64>,
    sigma: f64,
    seed: u64,
}

impl SyntheticScorer {
    pub fn new(ideal: Vec<f64>, sigma: f64, seed: u64) -> Self {
        debug_assert!(
            (ideal.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-6,
            "task-ideal vector must be unit-normalized"
        );
        Self { ideal, sigma, seed }
    }

    /// True prompt quality in [0, 1]; 1 means the prompt matches the task
    /// ideal exactly. Oracles and the ITA model read this directly.
    pub fn quality(&self, prompt: &PromptCandidate) -> f64 {
        quality_of(&prompt.features, &self.ideal)
    }
}

/// q = (1 + <u, v>) / 2 for unit vectors.
pub(crate) fn quality_of(features: &[f64], ideal: &[f64]) -> f64 {
    debug_assert_eq!(features.len(), ideal.len());
    let dot: f64 = features.iter().zip(ideal).map(|(a, b)| a * b).sum();
    (1.0 + dot) / 2.0
}

impl Scorer for SyntheticScorer {
    fn loss(&self, prompt: &PromptCandidate, sample: &EvalSample) -> f64 {
        let base = 1.0 - self.quality(prompt);
        if self.sigma == 0.0 {
            return base;
        }
        let mut h = crate::util::mix_u64(crate::util::FNV_OFFSET, self.seed);
        h = crate::util::mix_u64(h, prompt.id);
        h = crate::util::mix_bytes(h, sample.input.as_bytes());
        h = crate::util::mix_bytes(h, sample.target.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let noise: f64 = StandardNormal.sample(&mut rng);
        (base + self.sigma * noise).max(0.0)
    }
}

/// Wraps a scorer and counts loss evaluations; tests use it to pin the
/// K + C/K lookup complexity exactly.
pub struct CountingScorer<'a, S: Scorer + ?Sized> {
    inner: &'a S,
    count: Cell<usize>,
}

impl<'a, S: Scorer + ?Sized> CountingScorer<'a, S> {
    pub fn new(inner: &'a S) -> Self {
        Self {
            inner,
            count: Cell::new(0),
        }
    }

    /// Number of loss evaluations so far.
    pub fn count(&self) -> usize {
        self.count.get()
    }

    pub fn reset(&self) {
        self.count.set(0);
    }
}

impl<S: Scorer + ?Sized> Scorer for CountingScorer<'_, S> {
    fn loss(&self, prompt: &PromptCandidate, sample: &EvalSample) -> f64 {
        self.count.set(self.count.get() + 1);
        self.inner.loss(prompt, sample)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct FixedScorer(f64);
    impl Scorer for FixedScorer {
        fn loss(&self, _: &PromptCandidate, _: &EvalSample) -> f64 {
            self.0
        }
    }

    struct SeqScorer(Cell<usize>, Vec<f64>);
    impl Scorer for SeqScorer {
        fn loss(&self, _: &PromptCandidate, _: &EvalSample) -> f64 {
            let i = self.0.get();
            self.0.set(i + 1);
            self.1[i]
        }
    }

    fn unit(dim: usize, axis: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        v
    }

    #[test]
    fn zero_loss_scores_zero() {
        let p = PromptCandidate::new(0, "p", unit(4, 0)).unwrap();
        let eval = EvalSet::synthetic(0, 5).unwrap();
        assert_eq!(score(&p, &eval, &FixedScorer(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn score_is_arithmetic_mean() {
        let p = PromptCandidate::new(0, "p", unit(4, 0)).unwrap();
        let eval = EvalSet::synthetic(0, 2).unwrap();
        let s = SeqScorer(Cell::new(0), vec![1.0, 3.0]);
        assert_eq!(score(&p, &eval, &s).unwrap(), 2.0);
    }

    #[test]
    fn noiseless_synthetic_score_is_one_minus_quality() {
        // cos = 0.5 between p and ideal => q = 0.75 => score = 0.25.
        let ideal = vec![1.0, 0.0];
        let p = PromptCandidate::normalized(3, "p", vec![0.5, 3f64.sqrt() / 2.0]).unwrap();
        let scorer = SyntheticScorer::new(ideal, 0.0, 99);
        assert!((scorer.quality(&p) - 0.75).abs() < 1e-12);
        for n in [1, 4, 16] {
            let eval = EvalSet::synthetic(7, n).unwrap();
            let s = score(&p, &eval, &scorer).unwrap();
            assert!((s - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_is_deterministic_per_prompt_and_sample() {
        let scorer = SyntheticScorer::new(unit(8, 2), 0.1, 5);
        let p = PromptCandidate::new(11, "p", unit(8, 3)).unwrap();
        let sample = EvalSample {
            input: "a".into(),
            target: "b".into(),
        };
        let l1 = scorer.loss(&p, &sample);
        let l2 = scorer.loss(&p, &sample);
        assert_eq!(l1, l2);
        assert!(l1 >= 0.0);
        let other = EvalSample {
            input: "a2".into(),
            target: "b".into(),
        };
        assert_ne!(scorer.loss(&p, &sample), scorer.loss(&p, &other));
    }

    #[test]
    fn counting_scorer_counts() {
        let inner = FixedScorer(1.0);
        let counting = CountingScorer::new(&inner);
        let p = PromptCandidate::new(0, "p", unit(4, 0)).unwrap();
        let eval = EvalSet::synthetic(0, 16).unwrap();
        score(&p, &eval, &counting).unwrap();
        assert_eq!(counting.count(), 16);
        counting.reset();
        assert_eq!(counting.count(), 0);
    }
}
