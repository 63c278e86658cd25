//! Synthetic path workload: Zipf-distributed single accesses plus planted
//! bundles of paths that are always requested together.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use super::manager::{AccessSource, CacheManager, CachePolicy, CacheEpoch};
use super::store::TierStats;
use super::tracker::Access;
use crate::graph::{enumerate_paths, generate_nws};
use crate::PathId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub paths: usize,
    pub zipf_s: f64,
    pub bundles: usize,
    pub bundle_size: usize,
    /// Probability that a query requests a whole bundle.
    pub bundle_prob: f64,
    /// Zipf draws per non-bundle query.
    pub draws: usize,
    pub queries: usize,
    pub capacity: usize,
    pub query_interval_us: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            paths: 2000,
            zipf_s: 1.2,
            bundles: 10,
            bundle_size: 20,
            bundle_prob: 0.3,
            draws: 5,
            queries: 4000,
            capacity: 150,
            query_interval_us: 100_000,
        }
    }
}

/// Seeded query stream over path ids.
pub struct Workload {
    cfg: WorkloadConfig,
    rng: ChaCha8Rng,
    zipf: Zipf<f64>,
    /// Rank → path id.
    ranking: Vec<PathId>,
    bundles: Vec<Vec<PathId>>,
    quality: Vec<f64>,
    degree: Vec<f64>,
}

impl Workload {
    pub fn new(cfg: WorkloadConfig, seed: u64) -> Self {
        assert!(cfg.bundles * cfg.bundle_size <= cfg.paths, "bundles exceed the path universe");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ranking: Vec<PathId> = (0..cfg.paths as PathId).collect();
        ranking.shuffle(&mut rng);
        let mut pool = ranking.clone();
        pool.shuffle(&mut rng);
        let bundles = pool.chunks(cfg.bundle_size).take(cfg.bundles).map(|c| c.to_vec()).collect();
        let quality = (0..cfg.paths).map(|_| rng.gen::<f64>()).collect();
        // Mean degrees of real paths in a desk-scale data graph.
        let g = generate_nws(300, 4, 0.1, 5, seed).expect("valid generator parameters");
        let pool: Vec<f64> = enumerate_paths(&g, 3).iter().map(|p| p.mean_degree()).collect();
        let degree = (0..cfg.paths).map(|_| *pool.choose(&mut rng).unwrap()).collect();
        let zipf = Zipf::new(cfg.paths as u64, cfg.zipf_s).expect("valid Zipf parameters");
        Self { cfg, rng, zipf, ranking, bundles, quality, degree }
    }

    pub fn bundles(&self) -> &[Vec<PathId>] {
        &self.bundles
    }

    pub fn next_query(&mut self) -> Vec<Access> {
        let paths: Vec<PathId> = if self.rng.gen_bool(self.cfg.bundle_prob) {
            let b = self.rng.gen_range(0..self.bundles.len());
            self.bundles[b].clone()
        } else {
            (0..self.cfg.draws)
                .map(|_| self.ranking[self.zipf.sample(&mut self.rng) as usize - 1])
                .collect()
        };
        paths
            .into_iter()
            .map(|p| Access {
                path: p,
                pattern: p % 200,
                mean_degree: self.degree[p as usize],
                matched: self.rng.gen_bool(self.quality[p as usize]),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkloadRun {
    pub policy: CachePolicy,
    /// Hit rate over the second half of the stream.
    pub steady_hit_rate: f64,
    pub tier: TierStats,
    /// Every published weight vector was positive and summed to 1 ± 1e-9.
    pub weights_valid: bool,
    pub epochs: Vec<CacheEpoch>,
}

/// Streams the workload through one cache tier in front of memory.
pub fn run_workload(policy: CachePolicy, cfg: &WorkloadConfig, seed: u64) -> WorkloadRun {
    let mut w = Workload::new(cfg.clone(), seed);
    let mut mgr = CacheManager::new(10.0, seed);
    let mut tier = policy.tier(cfg.capacity);
    let (mut hits, mut total) = (0u64, 0u64);
    let half = cfg.queries / 2;
    for q in 0..cfg.queries {
        let now = q as u64 * cfg.query_interval_us;
        let accesses = w.next_query();
        mgr.begin_query(now, &accesses);
        let mut latency = 0.0;
        for a in &accesses {
            let ctx = mgr.ctx(now);
            let source = if tier.contains(a.path) {
                tier.on_hit(a.path, &ctx);
                AccessSource::SlaveCache
            } else {
                tier.offer(a.path, &ctx);
                AccessSource::SlaveMemory
            };
            mgr.observe(a.path, source);
            latency += source.latency_ms();
            if q >= half {
                total += 1;
                hits += source.is_cache_hit() as u64;
            }
        }
        if mgr.end_query(now, latency) {
            tier.refresh(&mgr.ctx(now));
        }
    }
    let weights_valid = mgr
        .history
        .iter()
        .all(|e| e.weights.iter().all(|&x| x > 0.0) && (e.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    WorkloadRun {
        policy,
        steady_hit_rate: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
        tier: tier.stats(),
        weights_valid,
        epochs: mgr.history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_seeded() {
        let cfg = WorkloadConfig::default();
        let mut a = Workload::new(cfg.clone(), 3);
        let mut b = Workload::new(cfg, 3);
        for _ in 0..20 {
            assert_eq!(a.next_query(), b.next_query());
        }
        assert_eq!(a.bundles().len(), 10);
        assert!(a.bundles().iter().all(|b| b.len() == 20));
    }

    #[test]
    fn short_run_keeps_invariants() {
        let cfg = WorkloadConfig { queries: 600, ..Default::default() };
        let a = run_workload(CachePolicy::Adaptive, &cfg, 1);
        assert_eq!(a.tier.evicted_protected, 0);
        assert!(a.weights_valid);
        assert!(!a.epochs.is_empty());
        assert!(a.steady_hit_rate > 0.0);
    }
}
