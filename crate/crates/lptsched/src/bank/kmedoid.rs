//! PAM-style K-medoid clustering over prompt feature vectors.
//!
//! Cosine distance is the production metric; Manhattan and Euclidean sit
//! behind the same interface for comparison runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PromptCandidate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Cosine,
    Euclidean,
    Manhattan,
}

impl DistanceMetric {
    pub fn distance(self, u: &[f64], v: &[f64]) -> Result<f64> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch {
                left: u.len(),
                right: v.len(),
            });
        }
        Ok(match self {
            DistanceMetric::Cosine => {
                1.0 - u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
            }
            DistanceMetric::Euclidean => u
                .iter()
                .zip(v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            DistanceMetric::Manhattan => u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum(),
        })
    }
}

/// 1 - <u, v> for unit vectors; 0 for identical, 2 for antipodal.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    DistanceMetric::Cosine.distance(u, v)
}

#[derive(Debug, Clone)]
pub struct KmedoidResult {
    /// Indices (into the candidate slice) of each cluster's medoid.
    pub medoids: Vec<usize>,
    /// Cluster index per candidate.
    pub assignment: Vec<usize>,
    /// Total assignment cost after seeding and after each swap pass;
    /// nonincreasing by construction.
    pub cost_history: Vec<f64>,
}

const MAX_ITERS: usize = 100;

/// K-medoid with cosine distance; see [`kmedoid_with_metric`].
pub fn kmedoid(candidates: &[PromptCandidate], k: usize, seed: u64) -> Result<KmedoidResult> {
    kmedoid_with_metric(candidates, k, seed, DistanceMetric::Cosine)
}

/// Alternating PAM: greedy farthest-point seeding, then repeated
/// assign-to-nearest-medoid / recenter-medoid passes until the total cost
/// stops decreasing (or `MAX_ITERS`). Ties break toward the lower
/// candidate id so runs are reproducible.
pub fn kmedoid_with_metric(
    candidates: &[PromptCandidate],
    k: usize,
    seed: u64,
    metric: DistanceMetric,
) -> Result<KmedoidResult> {
    let n = candidates.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let dist = |a: usize, b: usize| -> f64 {
        metric
            .distance(&candidates[a].features, &candidates[b].features)
            .expect("uniform dimension within one candidate set")
    };

    // Farthest-point seeding: a seeded first pick, then whichever point is
    // farthest from the chosen set.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids = vec![rng.gen_range(0..n)];
    let mut min_dist: Vec<f64> = (0..n).map(|i| dist(i, medoids[0])).collect();
    while medoids.len() < k {
        let mut best = usize::MAX;
        for i in 0..n {
            if medoids.contains(&i) {
                continue;
            }
            if best == usize::MAX
                || min_dist[i] > min_dist[best]
                || (min_dist[i] == min_dist[best] && candidates[i].id < candidates[best].id)
            {
                best = i;
            }
        }
        medoids.push(best);
        for i in 0..n {
            let d = dist(i, best);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }
    medoids.sort_unstable();

    let assign = |medoids: &[usize]| -> (Vec<usize>, f64) {
        let mut assignment = vec![0; n];
        let mut cost = 0.0;
        for i in 0..n {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for (c, &m) in medoids.iter().enumerate() {
                let d = dist(i, m);
                if d < best_d
                    || (d == best_d && candidates[m].id < candidates[medoids[best_c]].id)
                {
                    best_d = d;
                    best_c = c;
                }
            }
            assignment[i] = best_c;
            cost += best_d;
        }
        (assignment, cost)
    };

    let (mut assignment, mut cost) = assign(&medoids);
    let mut cost_history = vec![cost];

    for _ in 0..MAX_ITERS {
        // Recenter: each cluster's medoid becomes the member minimizing the
        // summed distance to the rest of the cluster.
        let prev_medoids = medoids.clone();
        let mut changed = false;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let mut best_m = medoids[c];
            let mut best_sum = f64::INFINITY;
            for &cand in &members {
                let sum: f64 = members.iter().map(|&o| dist(cand, o)).sum();
                if sum < best_sum
                    || (sum == best_sum && candidates[cand].id < candidates[best_m].id)
                {
                    best_sum = sum;
                    best_m = cand;
                }
            }
            if best_m != medoids[c] {
                medoids[c] = best_m;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let (new_assignment, new_cost) = assign(&medoids);
        if new_cost >= cost {
            // Recentering shuffled medoids without lowering the total;
            // keep the cheaper prior state.
            medoids = prev_medoids;
            break;
        }
        assignment = new_assignment;
        cost = new_cost;
        cost_history.push(cost);
    }

    Ok(KmedoidResult {
        medoids,
        assignment,
        cost_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: u64, v: Vec<f64>) -> PromptCandidate {
        PromptCandidate::normalized(id, format!("p{id}"), v).unwrap()
    }

    #[test]
    fn cosine_distance_extremes() {
        let u = vec![1.0, 0.0];
        let v = vec![-1.0, 0.0];
        let w = vec![0.0, 1.0];
        assert_eq!(cosine_distance(&u, &u).unwrap(), 0.0);
        assert_eq!(cosine_distance(&u, &v).unwrap(), 2.0);
        assert_eq!(cosine_distance(&u, &w).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(matches!(
            cosine_distance(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    /// Two tight antipodal pairs must come out as the two clusters; checked
    /// against an exhaustive scan of all 2-clusterings.
    #[test]
    fn antipodal_pairs_match_brute_force() {
        let cands = vec![
            cand(0, vec![1.0, 0.02]),
            cand(1, vec![1.0, -0.02]),
            cand(2, vec![-1.0, 0.02]),
            cand(3, vec![-1.0, -0.02]),
        ];
        let dist = |a: usize, b: usize| {
            cosine_distance(&cands[a].features, &cands[b].features).unwrap()
        };
        // Brute force: every bipartition, best medoid per side.
        let mut best_cost = f64::INFINITY;
        let mut best_split = 0u32;
        for mask in 1u32..(1 << 4) - 1 {
            let side: Vec<usize> = (0..4).filter(|i| mask & (1 << i) != 0).collect();
            let other: Vec<usize> = (0..4).filter(|i| mask & (1 << i) == 0).collect();
            let side_cost = |g: &[usize]| {
                g.iter()
                    .map(|&m| g.iter().map(|&x| dist(x, m)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            };
            let c = side_cost(&side) + side_cost(&other);
            if c < best_cost {
                best_cost = c;
                best_split = mask;
            }
        }
        assert!(best_split & 0b0011 == 0b0011 || best_split & 0b1100 == 0b1100);

        let res = kmedoid(&cands, 2, 17).unwrap();
        assert_eq!(res.assignment[0], res.assignment[1]);
        assert_eq!(res.assignment[2], res.assignment[3]);
        assert_ne!(res.assignment[0], res.assignment[2]);
        let total: f64 = (0..4).map(|i| dist(i, res.medoids[res.assignment[i]])).sum();
        assert!((total - best_cost).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_gives_zero_cost() {
        let cands: Vec<_> = (0..5)
            .map(|i| {
                let mut v = vec![0.0; 5];
                v[i as usize] = 1.0;
                cand(i, v)
            })
            .collect();
        let res = kmedoid(&cands, 5, 3).unwrap();
        assert_eq!(*res.cost_history.last().unwrap(), 0.0);
        let mut m = res.medoids.clone();
        m.sort_unstable();
        assert_eq!(m, vec![0, 1, 2, 3, 4]);
    }

    /// K = 1: the medoid must minimize the summed cosine distance over the
    /// whole set; checked by brute force over every candidate as center.
    #[test]
    fn k1_medoid_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cands: Vec<_> = (0..30)
            .map(|i| {
                let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                cand(i, v)
            })
            .collect();
        let dist = |a: usize, b: usize| {
            cosine_distance(&cands[a].features, &cands[b].features).unwrap()
        };
        let brute = (0..30)
            .min_by(|&a, &b| {
                let sa: f64 = (0..30).map(|o| dist(a, o)).sum();
                let sb: f64 = (0..30).map(|o| dist(b, o)).sum();
                sa.partial_cmp(&sb).unwrap()
            })
            .unwrap();
        let res = kmedoid(&cands, 1, 11).unwrap();
        assert_eq!(res.medoids[0], brute);
    }

    #[test]
    fn cost_history_nonincreasing_and_medoids_are_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cands: Vec<_> = (0..80)
            .map(|i| {
                let v: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
                cand(i, v)
            })
            .collect();
        let res = kmedoid(&cands, 8, 5).unwrap();
        for w in res.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for &m in &res.medoids {
            assert!(m < cands.len());
        }
        // Each medoid assigned to its own cluster.
        for (c, &m) in res.medoids.iter().enumerate() {
            assert_eq!(res.assignment[m], c);
        }
    }

    #[test]
    fn empty_and_oversized_k_rejected() {
        assert!(matches!(kmedoid(&[], 1, 0), Err(Error::EmptyInput)));
        let cands = vec![cand(0, vec![1.0, 0.0])];
        assert!(matches!(
            kmedoid(&cands, 2, 0),
            Err(Error::KTooLarge { .. })
        ));
    }

    /// Alternative metrics run behind the same interface; this documents
    /// that they terminate and produce member medoids (quality is not
    /// asserted: cosine is the supported production metric).
    #[test]
    fn alternative_metrics_terminate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cands: Vec<_> = (0..40)
            .map(|i| {
                let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                cand(i, v)
            })
            .collect();
        for metric in [DistanceMetric::Euclidean, DistanceMetric::Manhattan] {
            let res = kmedoid_with_metric(&cands, 4, 9, metric).unwrap();
            assert_eq!(res.assignment.len(), 40);
            for w in res.cost_history.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }
}
