//! The Prompt Bank: a two-layer clustered index of initial-prompt
//! candidates.
//!
//! Layer one holds each cluster's medoid (its representative prompt);
//! layer two holds the full membership. A lookup scores the K medoids,
//! descends into the best cluster and scores its members, cutting score
//! evaluations from C to K + C/K. Insertion routes by medoid distance
//! alone and replacement evicts the member closest to its representative,
//! keeping the bank diverse under a fixed capacity.

mod index;
mod kmedoid;
mod scorer;

pub use index::{LookupOutcome, PromptIndex};
pub use kmedoid::{cosine_distance, kmedoid, kmedoid_with_metric, DistanceMetric, KmedoidResult};
pub use scorer::{score, CountingScorer, Scorer, SyntheticScorer};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A candidate initial prompt with its activation-feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptCandidate {
    pub id: u64,
    pub text: String,
    pub features: Vec<f64>,
}

const UNIT_NORM_TOL: f64 = 1e-6;

impl PromptCandidate {
    /// Build a candidate from an already unit-normalized feature vector.
    pub fn new(id: u64, text: impl Into<String>, features: Vec<f64>) -> Result<Self> {
        let norm = features.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidConfig(format!(
                "candidate {id}: features must be unit-normalized (|f| = {norm})"
            )));
        }
        Ok(Self {
            id,
            text: text.into(),
            features,
        })
    }

    /// Build a candidate, normalizing the feature vector first.
    pub fn normalized(id: u64, text: impl Into<String>, mut features: Vec<f64>) -> Result<Self> {
        let norm = features.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidConfig(format!(
                "candidate {id}: zero feature vector"
            )));
        }
        for x in &mut features {
            *x /= norm;
        }
        Self::new(id, text, features)
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// One labeled evaluation sample: an input query and its target response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSample {
    pub input: String,
    pub target: String,
}

/// The small evaluation set a score is averaged over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSet {
    pub samples: Vec<EvalSample>,
}

impl EvalSet {
    pub fn new(samples: Vec<EvalSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyEvalSet);
        }
        Ok(Self { samples })
    }

    /// Placeholder samples for a synthetic task; the synthetic scorer only
    /// needs them as distinct, stable noise keys.
    pub fn synthetic(task: u32, n: usize) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|i| EvalSample {
                    input: format!("task{task}/in{i}"),
                    target: format!("task{task}/tgt{i}"),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_unit_features_rejected() {
        assert!(PromptCandidate::new(0, "p", vec![1.0, 1.0]).is_err());
        assert!(PromptCandidate::new(0, "p", vec![1.0, 0.0]).is_ok());
    }

    #[test]
    fn normalized_constructor_fixes_scale() {
        let c = PromptCandidate::normalized(7, "p", vec![3.0, 4.0]).unwrap();
        assert!((c.features[0] - 0.6).abs() < 1e-12);
        assert!((c.features[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn empty_eval_set_rejected() {
        assert!(matches!(EvalSet::new(vec![]), Err(Error::EmptyEvalSet)));
    }
}
