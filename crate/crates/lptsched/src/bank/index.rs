//! The two-layer prompt index and its lookup / insertion / replacement
//! operations.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kmedoid::{cosine_distance, kmedoid};
use super::scorer::{score, Scorer};
use super::{EvalSet, PromptCandidate};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Cluster {
    /// Position of the medoid within `members`; the medoid is always a
    /// member of its own cluster.
    medoid: usize,
    members: Vec<PromptCandidate>,
}

impl Cluster {
    fn medoid_candidate(&self) -> &PromptCandidate {
        &self.members[self.medoid]
    }
}

/// Result of one two-layer lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookupOutcome {
    pub candidate_id: u64,
    pub cluster: usize,
    pub score: f64,
    /// Exactly K + |matched cluster| score computations.
    pub evals_performed: usize,
}

/// Two-layer clustered prompt bank: clusters of candidates, each fronted
/// by its medoid.
#[derive(Debug, Clone)]
pub struct PromptIndex {
    clusters: Vec<Cluster>,
    capacity: usize,
    dim: usize,
    seed: u64,
}

impl PromptIndex {
    /// Cluster `candidates` into `k` groups with K-medoid and assemble the
    /// index. Medoids are pinned into their own clusters even in the
    /// degenerate duplicate-point case.
    pub fn build(
        candidates: Vec<PromptCandidate>,
        k: usize,
        capacity: usize,
        seed: u64,
    ) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::EmptyInput);
        }
        if candidates.len() > capacity {
            return Err(Error::InvalidConfig(format!(
                "candidate count {} exceeds capacity {capacity}",
                candidates.len()
            )));
        }
        let dim = candidates[0].dim();
        for c in &candidates {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: c.dim(),
                });
            }
        }
        let res = kmedoid(&candidates, k, seed)?;
        let mut assignment = res.assignment;
        for (c, &m) in res.medoids.iter().enumerate() {
            assignment[m] = c;
        }
        let mut clusters: Vec<Cluster> = (0..k)
            .map(|_| Cluster {
                medoid: 0,
                members: Vec::new(),
            })
            .collect();
        for (i, cand) in candidates.into_iter().enumerate() {
            let c = assignment[i];
            if i == res.medoids[c] {
                clusters[c].medoid = clusters[c].members.len();
            }
            clusters[c].members.push(cand);
        }
        Ok(Self {
            clusters,
            capacity,
            dim,
            seed,
        })
    }

    /// Re-cluster everything from scratch. Inserts never move medoids, so
    /// hosts run this as explicit maintenance when drift accumulates.
    pub fn rebuild(&mut self, k: usize, seed: u64) -> Result<()> {
        let all: Vec<PromptCandidate> = self
            .clusters
            .iter()
            .flat_map(|c| c.members.iter().cloned())
            .collect();
        *self = Self::build(all, k, self.capacity, seed)?;
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total candidates across all clusters.
    pub fn len(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.members.len()).collect()
    }

    pub fn candidate(&self, id: u64) -> Option<&PromptCandidate> {
        self.clusters
            .iter()
            .flat_map(|c| c.members.iter())
            .find(|p| p.id == id)
    }

    /// Cluster index holding candidate `id`, for tests and snapshots.
    pub fn cluster_of(&self, id: u64) -> Option<usize> {
        self.clusters
            .iter()
            .position(|c| c.members.iter().any(|p| p.id == id))
    }

    pub fn medoid_ids(&self) -> Vec<u64> {
        self.clusters.iter().map(|c| c.medoid_candidate().id).collect()
    }

    /// Two-layer lookup: score the K medoids, descend into the cluster
    /// whose medoid scored lowest, then score every member of that cluster
    /// and return the best. Performs exactly K + |matched cluster| score
    /// computations. Ties break toward the lower candidate id.
    pub fn lookup<S: Scorer + ?Sized>(
        &self,
        eval: &EvalSet,
        scorer: &S,
    ) -> Result<LookupOutcome> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut evals = 0usize;
        let mut best_cluster = usize::MAX;
        let mut best_medoid: (f64, u64) = (f64::INFINITY, u64::MAX);
        for (ci, cluster) in self.clusters.iter().enumerate() {
            let m = cluster.medoid_candidate();
            let s = score(m, eval, scorer)?;
            evals += 1;
            if s < best_medoid.0 || (s == best_medoid.0 && m.id < best_medoid.1) {
                best_medoid = (s, m.id);
                best_cluster = ci;
            }
        }
        let cluster = &self.clusters[best_cluster];
        let mut best: (f64, u64) = (f64::INFINITY, u64::MAX);
        for p in &cluster.members {
            let s = score(p, eval, scorer)?;
            evals += 1;
            if s < best.0 || (s == best.0 && p.id < best.1) {
                best = (s, p.id);
            }
        }
        Ok(LookupOutcome {
            candidate_id: best.1,
            cluster: best_cluster,
            score: best.0,
            evals_performed: evals,
        })
    }

    /// Flat scan over every candidate: the brute-force baseline a K=1 index
    /// degenerates to. Costs `len()` score computations.
    pub fn full_scan<S: Scorer + ?Sized>(
        &self,
        eval: &EvalSet,
        scorer: &S,
    ) -> Result<LookupOutcome> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut evals = 0usize;
        let mut best: (f64, u64, usize) = (f64::INFINITY, u64::MAX, 0);
        for (ci, cluster) in self.clusters.iter().enumerate() {
            for p in &cluster.members {
                let s = score(p, eval, scorer)?;
                evals += 1;
                if s < best.0 || (s == best.0 && p.id < best.1) {
                    best = (s, p.id, ci);
                }
            }
        }
        Ok(LookupOutcome {
            candidate_id: best.1,
            cluster: best.2,
            score: best.0,
            evals_performed: evals,
        })
    }

    /// Append `p` to the cluster whose medoid is nearest in cosine
    /// distance; no score computations are involved. When the bank is over
    /// capacity afterwards, replacement fires within that same cluster and
    /// the evicted candidate is returned.
    pub fn insert(&mut self, p: PromptCandidate) -> Result<Option<PromptCandidate>> {
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: p.dim(),
            });
        }
        let mut best_cluster = 0usize;
        let mut best: (f64, u64) = (f64::INFINITY, u64::MAX);
        for (ci, cluster) in self.clusters.iter().enumerate() {
            let m = cluster.medoid_candidate();
            let d = cosine_distance(&p.features, &m.features)?;
            if d < best.0 || (d == best.0 && m.id < best.1) {
                best = (d, m.id);
                best_cluster = ci;
            }
        }
        self.clusters[best_cluster].members.push(p);
        if self.len() > self.capacity {
            let removed = self.replace_within(best_cluster)?;
            return Ok(Some(removed));
        }
        Ok(None)
    }

    /// Evict the non-medoid member closest to the cluster's representative
    /// prompt, maximizing the residual diversity of the cluster. The
    /// medoid itself is never evicted.
    pub fn replace_within(&mut self, cluster_idx: usize) -> Result<PromptCandidate> {
        let cluster = &mut self.clusters[cluster_idx];
        if cluster.members.len() < 2 {
            return Err(Error::ClusterTooSmall);
        }
        let medoid_features = cluster.members[cluster.medoid].features.clone();
        let mut victim = usize::MAX;
        let mut best: (f64, u64) = (f64::INFINITY, u64::MAX);
        for (i, p) in cluster.members.iter().enumerate() {
            if i == cluster.medoid {
                continue;
            }
            let d = cosine_distance(&p.features, &medoid_features)?;
            if d < best.0 || (d == best.0 && p.id < best.1) {
                best = (d, p.id);
                victim = i;
            }
        }
        let removed = cluster.members.remove(victim);
        if victim < cluster.medoid {
            cluster.medoid -= 1;
        }
        Ok(removed)
    }

    /// Wall-clock estimate for one lookup: (K + mean cluster size) score
    /// evaluations at `per_eval_cost` seconds each. The latency-budget
    /// router consults this before committing a job to the bank phase.
    pub fn latency_estimate(&self, per_eval_cost: f64) -> Result<f64> {
        if per_eval_cost <= 0.0 {
            return Err(Error::NonPositiveEvalCost(per_eval_cost));
        }
        let mean = self.len() as f64 / self.k() as f64;
        Ok((self.k() as f64 + mean) * per_eval_cost)
    }

    /// Write the snapshot: a JSON header line (K, capacity, dim, seed,
    /// medoid ids), then one JSON record per candidate with its cluster.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        let header = SnapshotHeader {
            k: self.k(),
            capacity: self.capacity,
            dim: self.dim,
            seed: self.seed,
            medoids: self.medoid_ids(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.push(b'\n');
        for (ci, cluster) in self.clusters.iter().enumerate() {
            for p in &cluster.members {
                let rec = SnapshotRecord {
                    id: p.id,
                    text: &p.text,
                    features: &p.features,
                    cluster: ci,
                };
                serde_json::to_writer(&mut out, &rec)?;
                out.push(b'\n');
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path)?;
        let mut lines = BufReader::new(f).lines();
        let header_line = lines
            .next()
            .ok_or(Error::EmptyIndex)?
            .map_err(Error::Io)?;
        let header: SnapshotHeader = serde_json::from_str(&header_line)?;
        let mut clusters: Vec<Cluster> = (0..header.k)
            .map(|_| Cluster {
                medoid: 0,
                members: Vec::new(),
            })
            .collect();
        for line in lines {
            let line = line.map_err(Error::Io)?;
            if line.is_empty() {
                continue;
            }
            let rec: SnapshotRecordOwned = serde_json::from_str(&line)?;
            if rec.cluster >= header.k {
                return Err(Error::InvalidConfig(format!(
                    "snapshot record {} names cluster {} out of {}",
                    rec.id, rec.cluster, header.k
                )));
            }
            let cand = PromptCandidate::new(rec.id, rec.text, rec.features)?;
            let cluster = &mut clusters[rec.cluster];
            if header.medoids[rec.cluster] == cand.id {
                cluster.medoid = cluster.members.len();
            }
            cluster.members.push(cand);
        }
        let idx = Self {
            clusters,
            capacity: header.capacity,
            dim: header.dim,
            seed: header.seed,
        };
        for (ci, c) in idx.clusters.iter().enumerate() {
            if c.members.is_empty() {
                return Err(Error::InvalidConfig(format!("snapshot cluster {ci} empty")));
            }
            if c.medoid_candidate().id != header.medoids[ci] {
                return Err(Error::InvalidConfig(format!(
                    "snapshot cluster {ci} missing its medoid"
                )));
            }
        }
        Ok(idx)
    }

    /// Assemble an index from explicit clusters; the first member of each
    /// group is its medoid. Snapshot loading and tests with handmade
    /// cluster shapes use this.
    pub fn from_clusters(
        groups: Vec<Vec<PromptCandidate>>,
        capacity: usize,
        seed: u64,
    ) -> Result<Self> {
        if groups.is_empty() || groups.iter().any(|g| g.is_empty()) {
            return Err(Error::EmptyInput);
        }
        let dim = groups[0][0].dim();
        let total: usize = groups.iter().map(|g| g.len()).sum();
        if total > capacity {
            return Err(Error::InvalidConfig(format!(
                "candidate count {total} exceeds capacity {capacity}"
            )));
        }
        for g in &groups {
            for p in g {
                if p.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        left: dim,
                        right: p.dim(),
                    });
                }
            }
        }
        Ok(Self {
            clusters: groups
                .into_iter()
                .map(|members| Cluster { medoid: 0, members })
                .collect(),
            capacity,
            dim,
            seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    k: usize,
    capacity: usize,
    dim: usize,
    seed: u64,
    medoids: Vec<u64>,
}

#[derive(Serialize)]
struct SnapshotRecord<'a> {
    id: u64,
    text: &'a str,
    features: &'a [f64],
    cluster: usize,
}

#[derive(Deserialize)]
struct SnapshotRecordOwned {
    id: u64,
    text: String,
    features: Vec<f64>,
    cluster: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::scorer::{CountingScorer, SyntheticScorer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(dim: usize, axis: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        v
    }

    fn random_candidates(n: usize, dim: usize, seed: u64) -> Vec<PromptCandidate> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                PromptCandidate::normalized(i as u64, format!("p{i}"), v).unwrap()
            })
            .collect()
    }

    #[test]
    fn k1_lookup_equals_full_scan() {
        let cands = random_candidates(60, 8, 1);
        let idx = PromptIndex::build(cands, 1, 100, 2).unwrap();
        let scorer = SyntheticScorer::new(unit(8, 0), 0.0, 3);
        let eval = EvalSet::synthetic(0, 4).unwrap();
        let two_layer = idx.lookup(&eval, &scorer).unwrap();
        let flat = idx.full_scan(&eval, &scorer).unwrap();
        assert_eq!(two_layer.candidate_id, flat.candidate_id);
        assert_eq!(flat.evals_performed, 60);
        // K=1 scores the single medoid, then the whole cluster.
        assert_eq!(two_layer.evals_performed, 61);
    }

    #[test]
    fn lookup_eval_count_is_k_plus_cluster() {
        let cands = random_candidates(100, 8, 4);
        let idx = PromptIndex::build(cands, 10, 200, 5).unwrap();
        let scorer = SyntheticScorer::new(unit(8, 1), 0.0, 7);
        let counting = CountingScorer::new(&scorer);
        let eval = EvalSet::synthetic(1, 1).unwrap();
        let out = idx.lookup(&eval, &counting).unwrap();
        let matched = idx.cluster_sizes()[out.cluster];
        assert_eq!(out.evals_performed, 10 + matched);
        // One-sample eval set: loss calls == score computations.
        assert_eq!(counting.count(), out.evals_performed);
    }

    #[test]
    fn noiseless_lookup_is_cluster_exact() {
        // With sigma = 0 the returned prompt has the best true quality in
        // its cluster.
        let cands = random_candidates(120, 16, 9);
        let idx = PromptIndex::build(cands, 8, 200, 10).unwrap();
        let scorer = SyntheticScorer::new(unit(16, 3), 0.0, 11);
        let eval = EvalSet::synthetic(2, 4).unwrap();
        let out = idx.lookup(&eval, &scorer).unwrap();
        let picked = idx.candidate(out.candidate_id).unwrap();
        let picked_q = scorer.quality(picked);
        let best_in_cluster = idx.clusters[out.cluster]
            .members
            .iter()
            .map(|p| scorer.quality(p))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(picked_q >= best_in_cluster - 1e-12);
    }

    #[test]
    fn insert_joins_nearest_medoid_cluster() {
        let groups = vec![
            vec![
                PromptCandidate::new(0, "m0", unit(4, 0)).unwrap(),
                PromptCandidate::normalized(1, "a", vec![0.9, 0.1, 0.0, 0.0]).unwrap(),
            ],
            vec![
                PromptCandidate::new(10, "m1", unit(4, 1)).unwrap(),
                PromptCandidate::normalized(11, "b", vec![0.1, 0.9, 0.0, 0.0]).unwrap(),
            ],
        ];
        let mut idx = PromptIndex::from_clusters(groups, 100, 0).unwrap();
        // Exactly equal to medoid 10: joins cluster 1.
        let dup = PromptCandidate::new(42, "dup", unit(4, 1)).unwrap();
        idx.insert(dup).unwrap();
        assert_eq!(idx.cluster_of(42), Some(1));
        // Single-cluster index always routes there.
        let solo = PromptIndex::from_clusters(
            vec![vec![PromptCandidate::new(0, "m", unit(4, 0)).unwrap()]],
            10,
            0,
        )
        .unwrap();
        let mut solo = solo;
        solo.insert(PromptCandidate::new(5, "x", unit(4, 2)).unwrap())
            .unwrap();
        assert_eq!(solo.cluster_of(5), Some(0));
    }

    #[test]
    fn capacity_enforced_on_insert() {
        let cands = random_candidates(50, 8, 20);
        let mut idx = PromptIndex::build(cands, 5, 50, 21).unwrap();
        assert_eq!(idx.len(), 50);
        for i in 0..25 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i);
            let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = PromptCandidate::normalized(1000 + i, "n", v).unwrap();
            let evicted = idx.insert(p).unwrap();
            assert!(evicted.is_some());
            assert_eq!(idx.len(), 50);
        }
    }

    #[test]
    fn replacement_evicts_member_nearest_medoid() {
        let groups = vec![vec![
            PromptCandidate::new(0, "m", unit(4, 0)).unwrap(),
            PromptCandidate::normalized(1, "near", vec![0.995, 0.0998, 0.0, 0.0]).unwrap(),
            PromptCandidate::normalized(2, "far", vec![0.6, 0.8, 0.0, 0.0]).unwrap(),
        ]];
        let mut idx = PromptIndex::from_clusters(groups, 100, 0).unwrap();
        let removed = idx.replace_within(0).unwrap();
        assert_eq!(removed.id, 1);
        assert_eq!(idx.len(), 2);
    }

    #[test]
    fn replacement_never_evicts_medoid() {
        // A freshly inserted exact duplicate of the medoid sits at distance
        // zero; the duplicate goes, not the medoid.
        let groups = vec![vec![
            PromptCandidate::new(0, "m", unit(4, 0)).unwrap(),
            PromptCandidate::new(1, "dup", unit(4, 0)).unwrap(),
        ]];
        let mut idx = PromptIndex::from_clusters(groups, 100, 0).unwrap();
        let removed = idx.replace_within(0).unwrap();
        assert_eq!(removed.id, 1);
        assert_eq!(idx.medoid_ids(), vec![0]);
    }

    #[test]
    fn two_member_cluster_evicts_the_non_medoid() {
        let groups = vec![vec![
            PromptCandidate::new(0, "m", unit(4, 0)).unwrap(),
            PromptCandidate::normalized(7, "other", vec![0.5, 0.5, 0.5, 0.5]).unwrap(),
        ]];
        let mut idx = PromptIndex::from_clusters(groups, 100, 0).unwrap();
        assert_eq!(idx.replace_within(0).unwrap().id, 7);
        assert!(matches!(
            idx.replace_within(0),
            Err(Error::ClusterTooSmall)
        ));
    }

    #[test]
    fn latency_estimate_matches_shape() {
        let cands = random_candidates(100, 8, 30);
        let idx = PromptIndex::build(cands, 1, 200, 31).unwrap();
        // K=1, C=100: 101 evaluations at 1 s each.
        assert_eq!(idx.latency_estimate(1.0).unwrap(), 101.0);
        assert!(matches!(
            idx.latency_estimate(0.0),
            Err(Error::NonPositiveEvalCost(_))
        ));
        // Defaults shape: K=50 over 2500 candidates, 53 ms per eval -> 5.3 s.
        let cands = random_candidates(2500, 4, 32);
        let idx = PromptIndex::build(cands, 50, 2500, 33).unwrap();
        assert!((idx.latency_estimate(0.053).unwrap() - 5.3).abs() < 1e-9);
    }

    #[test]
    fn snapshot_roundtrip_bit_exact() {
        let cands = random_candidates(40, 8, 40);
        let idx = PromptIndex::build(cands, 4, 80, 41).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("bank.jsonl");
        let p2 = dir.path().join("bank2.jsonl");
        idx.save(&p1).unwrap();
        let loaded = PromptIndex::load(&p1).unwrap();
        assert_eq!(loaded.len(), idx.len());
        assert_eq!(loaded.medoid_ids(), idx.medoid_ids());
        assert_eq!(loaded.cluster_sizes(), idx.cluster_sizes());
        for c in idx.clusters.iter().flat_map(|c| c.members.iter()) {
            assert_eq!(loaded.candidate(c.id).unwrap(), c);
        }
        loaded.save(&p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn capacity_conservation_under_random_inserts() {
        let cands = random_candidates(80, 8, 50);
        let mut idx = PromptIndex::build(cands, 6, 100, 51).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for i in 0..200u64 {
            let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            idx.insert(PromptCandidate::normalized(500 + i, "r", v).unwrap())
                .unwrap();
            assert!(idx.len() <= 100);
            let total: usize = idx.cluster_sizes().iter().sum();
            assert_eq!(total, idx.len());
        }
        assert_eq!(idx.len(), 100);
    }
}
