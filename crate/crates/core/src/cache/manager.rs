//! Epoch bookkeeping shared by every tier, and the two-level access path.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::features::{trigger_threshold, window_and_sync, SyncSettings};
use super::store::{AdaptiveCache, CacheCtx, LruCache, PathCache, TierStats};
use super::tracker::{Access, AccessTracker};
use super::weights::{
    incremental_train, init_weights, FeatureSnapshot, TrainOutcome, WeightModel, INIT_SNAPSHOTS, MIN_TRAIN_SNAPSHOTS,
    TRAIN_SNAPSHOTS,
    UNIFORM_WEIGHTS,
};
use crate::{MachineId, PathId};

/// Queries per feature epoch.
pub const EPOCH_QUERIES: usize = 50;
/// Paths the master memory index tracks.
pub const MASTER_SCOPE: usize = 500;
/// Paths a slave cache is sized for.
pub const SLAVE_SCOPE: usize = 100;
/// Hit-rate drop (absolute) between epochs that triggers training before
/// 100 new snapshots have accumulated.
pub const RETRAIN_DROP: f64 = 0.05;
/// Queries in the sliding window used for sync cadence.
pub const SYNC_WINDOW_QUERIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CachePolicy {
    Adaptive,
    Lru,
}

impl CachePolicy {
    pub fn tier(self, capacity: usize) -> Box<dyn PathCache + Send> {
        match self {
            CachePolicy::Adaptive => Box::new(AdaptiveCache::new(capacity)),
            CachePolicy::Lru => Box::new(LruCache::new(capacity)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AccessSource {
    MasterCache,
    MasterMemory,
    SlaveCache,
    SlaveMemory,
    NotFound,
}

impl AccessSource {
    pub const ALL: [AccessSource; 5] = [
        AccessSource::MasterCache,
        AccessSource::MasterMemory,
        AccessSource::SlaveCache,
        AccessSource::SlaveMemory,
        AccessSource::NotFound,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            AccessSource::MasterCache => "master cache",
            AccessSource::MasterMemory => "master memory",
            AccessSource::SlaveCache => "slave cache",
            AccessSource::SlaveMemory => "slave memory",
            AccessSource::NotFound => "not found",
        }
    }

    /// Simulated fetch latency.
    pub fn latency_ms(self) -> f64 {
        match self {
            AccessSource::MasterCache => 0.001,
            AccessSource::MasterMemory => 0.005,
            AccessSource::SlaveCache => 0.02,
            AccessSource::SlaveMemory | AccessSource::NotFound => 0.1,
        }
    }

    pub fn is_cache_hit(self) -> bool {
        matches!(self, AccessSource::MasterCache | AccessSource::SlaveCache)
    }
}

#[derive(Debug, Clone, Default)]
struct PathEpoch {
    accesses: u64,
    hits: u64,
    latency_ms: f64,
}

/// Per-epoch metrics record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEpoch {
    pub epoch: u64,
    pub hit_rate: f64,
    pub mean_query_latency_ms: f64,
    pub t_up: f64,
    pub weights: [f64; 4],
    pub model_version: u64,
    pub sync: SyncSettings,
    pub trained: Option<TrainOutcome>,
}

/// Tracker, weight state and epoch statistics.
#[derive(Debug, Clone)]
pub struct CacheManager {
    pub tracker: AccessTracker,
    pub weights: [f64; 4],
    pub model: Option<WeightModel>,
    pub t_up: f64,
    pub theta_d: f64,
    first: Vec<FeatureSnapshot>,
    recent: VecDeque<FeatureSnapshot>,
    epoch_paths: BTreeMap<PathId, PathEpoch>,
    epoch_queries: usize,
    epoch_latency_ms: f64,
    epoch: u64,
    epoch_start_us: u64,
    prev: Option<(f64, f64)>,
    since_train: usize,
    query_times: VecDeque<u64>,
    seed: u64,
    pub sync: SyncSettings,
    pub history: Vec<CacheEpoch>,
}

impl CacheManager {
    pub fn new(theta_d: f64, seed: u64) -> Self {
        let sync = window_and_sync(0.0, 0);
        Self {
            tracker: AccessTracker::new(sync.window_s * 1_000_000),
            weights: UNIFORM_WEIGHTS,
            model: None,
            t_up: trigger_threshold(0.0, 0.0),
            theta_d,
            first: Vec::new(),
            recent: VecDeque::new(),
            epoch_paths: BTreeMap::new(),
            epoch_queries: 0,
            epoch_latency_ms: 0.0,
            epoch: 0,
            epoch_start_us: 0,
            prev: None,
            since_train: 0,
            query_times: VecDeque::new(),
            seed,
            sync,
            history: Vec::new(),
        }
    }

    pub fn ctx(&self, now_us: u64) -> CacheCtx<'_> {
        CacheCtx { tracker: &self.tracker, weights: self.weights, now_us, t_up: self.t_up, theta_d: self.theta_d }
    }

    pub fn begin_query(&mut self, now_us: u64, accesses: &[Access]) {
        self.tracker.record_query(now_us, accesses);
        self.query_times.push_back(now_us);
        if self.query_times.len() > SYNC_WINDOW_QUERIES {
            self.query_times.pop_front();
        }
    }

    pub fn observe(&mut self, p: PathId, source: AccessSource) {
        let e = self.epoch_paths.entry(p).or_default();
        e.accesses += 1;
        e.hits += source.is_cache_hit() as u64;
        e.latency_ms += source.latency_ms();
    }

    /// Closes a query; returns true when an epoch boundary was crossed and
    /// tiers must be refreshed.
    pub fn end_query(&mut self, now_us: u64, query_latency_ms: f64) -> bool {
        self.epoch_queries += 1;
        self.epoch_latency_ms += query_latency_ms;
        if self.epoch_queries < EPOCH_QUERIES {
            return false;
        }
        self.close_epoch(now_us);
        true
    }

    fn snapshots(&self) -> Vec<FeatureSnapshot> {
        self.recent.iter().cloned().collect()
    }

    fn close_epoch(&mut self, now_us: u64) {
        let (mut acc, mut hits) = (0u64, 0u64);
        for (&p, e) in &self.epoch_paths {
            acc += e.accesses;
            hits += e.hits;
            let row = FeatureSnapshot {
                path_id: p,
                epoch: self.epoch,
                features: self.tracker.features(p),
                mean_degree: self.tracker.meta(p).map_or(0.0, |m| m.mean_degree),
                hit_rate: e.hits as f64 / e.accesses as f64,
                latency_ms: e.latency_ms / e.accesses as f64,
            };
            if self.first.len() < INIT_SNAPSHOTS {
                self.first.push(row.clone());
            }
            self.recent.push_back(row);
            self.since_train += 1;
            if self.recent.len() > TRAIN_SNAPSHOTS {
                self.recent.pop_front();
            }
        }
        let h = if acc == 0 { 0.0 } else { hits as f64 / acc as f64 };
        let l = self.epoch_latency_ms / self.epoch_queries as f64;
        self.t_up = trigger_threshold(h, l);

        let mut trained = None;
        if self.model.is_none() && self.first.len() >= INIT_SNAPSHOTS {
            self.weights = init_weights(&self.first);
            self.since_train = 0;
            self.model = Some(WeightModel::from_weights(self.weights, self.seed));
        } else if let (Some(model), Some((h_prev, l_prev))) = (&self.model, self.prev) {
            if h_prev - h >= RETRAIN_DROP || self.since_train >= MIN_TRAIN_SNAPSHOTS {
                self.since_train = 0;
                let snaps = self.snapshots();
                let (next, out) = incremental_train(&snaps, h_prev, l_prev, model, self.seed ^ self.epoch);
                if out.accepted {
                    let n = snaps.len() as f64;
                    let mean: [f64; 4] = std::array::from_fn(|i| snaps.iter().map(|s| s.features[i]).sum::<f64>() / n);
                    self.weights = next.infer(&mean);
                    self.model = Some(next);
                }
                trained = Some(out);
            }
        }

        let elapsed_s = (now_us.saturating_sub(self.epoch_start_us)) as f64 / 1e6;
        let qps = if elapsed_s > 0.0 { self.epoch_queries as f64 / elapsed_s } else { f64::INFINITY };
        let recent_in_interval = self
            .query_times
            .iter()
            .filter(|&&t| now_us.saturating_sub(t) <= self.sync.weight_sync_s * 1_000_000)
            .count();
        self.sync = window_and_sync(qps, recent_in_interval);
        self.tracker.window_us = self.sync.window_s * 1_000_000;
        self.tracker.refresh_top();

        self.history.push(CacheEpoch {
            epoch: self.epoch,
            hit_rate: h,
            mean_query_latency_ms: l,
            t_up: self.t_up,
            weights: self.weights,
            model_version: self.model.as_ref().map_or(0, |m| m.version),
            sync: self.sync,
            trained,
        });
        self.prev = Some((h, l));
        self.epoch += 1;
        self.epoch_start_us = now_us;
        self.epoch_queries = 0;
        self.epoch_latency_ms = 0.0;
        self.epoch_paths.clear();
    }
}

/// Master cache and memory index in front of per-worker caches and memories.
#[derive(Debug)]
pub struct TwoLevelCache {
    pub manager: CacheManager,
    pub policy: CachePolicy,
    master_cache: Box<dyn PathCache + Send>,
    master_memory: BTreeSet<PathId>,
    slave_caches: Vec<Box<dyn PathCache + Send>>,
    pub source_counts: BTreeMap<AccessSource, u64>,
}

impl TwoLevelCache {
    pub fn new(policy: CachePolicy, workers: usize, master_capacity: usize, slave_capacity: usize, theta_d: f64, seed: u64) -> Self {
        Self {
            manager: CacheManager::new(theta_d, seed),
            policy,
            master_cache: policy.tier(master_capacity),
            master_memory: BTreeSet::new(),
            slave_caches: (0..workers).map(|_| policy.tier(slave_capacity)).collect(),
            source_counts: BTreeMap::new(),
        }
    }

    /// Strict tier order. `owner` is the worker whose memory holds `p`
    /// under the current routing, if any. A slave-memory hit is offered to
    /// that worker's cache.
    pub fn access_path(&mut self, p: PathId, owner: Option<MachineId>, now_us: u64) -> (Option<PathId>, AccessSource) {
        let source = self.lookup(p, owner, now_us);
        *self.source_counts.entry(source).or_default() += 1;
        self.manager.observe(p, source);
        ((source != AccessSource::NotFound).then_some(p), source)
    }

    fn lookup(&mut self, p: PathId, owner: Option<MachineId>, now_us: u64) -> AccessSource {
        let ctx = self.manager.ctx(now_us);
        if self.master_cache.contains(p) {
            self.master_cache.on_hit(p, &ctx);
            return AccessSource::MasterCache;
        }
        if self.master_memory.contains(&p) {
            self.master_cache.offer(p, &ctx);
            return AccessSource::MasterMemory;
        }
        let Some(k) = owner else {
            return AccessSource::NotFound;
        };
        let slave = &mut self.slave_caches[k as usize];
        if slave.contains(p) {
            slave.on_hit(p, &ctx);
            return AccessSource::SlaveCache;
        }
        slave.offer(p, &ctx);
        AccessSource::SlaveMemory
    }

    /// A migrated shard's paths leave the old owner's cache with it.
    pub fn reset_worker(&mut self, k: MachineId, capacity: usize) {
        self.slave_caches[k as usize] = self.policy.tier(capacity);
    }

    pub fn begin_query(&mut self, now_us: u64, accesses: &[Access]) {
        self.manager.begin_query(now_us, accesses);
    }

    pub fn end_query(&mut self, now_us: u64, latency_ms: f64, exists: &dyn Fn(PathId) -> bool) -> Option<&CacheEpoch> {
        if !self.manager.end_query(now_us, latency_ms) {
            return None;
        }
        self.master_memory = self
            .manager
            .tracker
            .top_by_freq(MASTER_SCOPE)
            .into_iter()
            .filter(|&p| exists(p))
            .collect();
        let ctx = self.manager.ctx(now_us);
        self.master_cache.refresh(&ctx);
        for s in &mut self.slave_caches {
            s.refresh(&ctx);
        }
        self.manager.history.last()
    }

    pub fn master_stats(&self) -> TierStats {
        self.master_cache.stats()
    }

    pub fn slave_stats(&self) -> Vec<TierStats> {
        self.slave_caches.iter().map(|s| s.stats()).collect()
    }

    pub fn master_cache_contains(&self, p: PathId) -> bool {
        self.master_cache.contains(p)
    }

    pub fn slave_cache_contains(&self, k: MachineId, p: PathId) -> bool {
        self.slave_caches[k as usize].contains(p)
    }

    pub fn master_memory_contains(&self, p: PathId) -> bool {
        self.master_memory.contains(&p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(p: PathId) -> Access {
        Access { path: p, pattern: p, mean_degree: 3.0, matched: true }
    }

    #[test]
    fn unknown_path_is_not_found() {
        let mut c = TwoLevelCache::new(CachePolicy::Adaptive, 2, 8, 4, 10.0, 0);
        assert_eq!(c.access_path(99, None, 0), (None, AccessSource::NotFound));
    }

    #[test]
    fn slave_memory_hit_is_admitted_then_hits_cache() {
        let mut c = TwoLevelCache::new(CachePolicy::Adaptive, 2, 8, 4, 10.0, 0);
        c.begin_query(0, &[acc(5)]);
        assert_eq!(c.access_path(5, Some(1), 0).1, AccessSource::SlaveMemory);
        assert!(c.slave_cache_contains(1, 5));
        assert_eq!(c.access_path(5, Some(1), 1).1, AccessSource::SlaveCache);
        assert!(!c.slave_cache_contains(0, 5));
    }

    #[test]
    fn master_tiers_short_circuit() {
        let mut c = TwoLevelCache::new(CachePolicy::Lru, 1, 8, 4, 10.0, 0);
        for q in 0..EPOCH_QUERIES {
            c.begin_query(q as u64, &[acc(7)]);
            c.access_path(7, Some(0), q as u64);
            c.end_query(q as u64, 0.1, &|_| true);
        }
        assert!(c.master_memory_contains(7));
        let before = c.slave_stats()[0];
        assert_eq!(c.access_path(7, Some(0), 100).1, AccessSource::MasterMemory);
        assert_eq!(c.access_path(7, Some(0), 101).1, AccessSource::MasterCache);
        assert_eq!(c.slave_stats()[0], before);
    }
}
