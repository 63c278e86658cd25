//! Cache tiers: the value-driven adaptive cache and the LRU baseline.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::features::{cache_value, decay_feature, recency, t_low, Features, TAU_S};
use super::tracker::AccessTracker;
use crate::PathId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub path_id: PathId,
    /// Raw features at their birth times.
    pub f0: Features,
    pub born_us: [u64; 4],
    pub last_access_us: u64,
    pub match_freq: u64,
    pub total_freq: u64,
    pub mean_degree: f64,
    pub pattern: u64,
}

impl CacheEntry {
    pub fn from_tracker(p: PathId, tracker: &AccessTracker) -> Self {
        let c = tracker.counters(p);
        let meta = tracker.meta(p);
        Self {
            path_id: p,
            f0: tracker.features(p),
            born_us: [tracker.now_us; 4],
            last_access_us: c.last_access_us,
            match_freq: c.match_freq,
            total_freq: c.total_freq,
            mean_degree: meta.map_or(0.0, |m| m.mean_degree),
            pattern: meta.map_or(0, |m| m.pattern),
        }
    }

    /// Features at `now_us`: f1, f2 and f4 decay from their birth; f3 is
    /// recency over the statistics window.
    pub fn features(&self, now_us: u64, window_us: u64) -> Features {
        let mut f: Features =
            std::array::from_fn(|i| decay_feature(self.f0[i], now_us.saturating_sub(self.born_us[i]) as f64 / 1e6, TAU_S));
        f[2] = recency(self.last_access_us, now_us, window_us);
        f
    }

    pub fn value(&self, ctx: &CacheCtx) -> f64 {
        cache_value(&self.features(ctx.now_us, ctx.tracker.window_us), &ctx.weights, self.mean_degree)
    }

    pub fn touch(&mut self, now_us: u64) {
        self.last_access_us = now_us;
        self.f0[2] = 1.0;
        self.born_us[2] = now_us;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvictionClass {
    Protected,
    Normal,
    Evictable,
}

/// Everything value and eviction decisions need.
pub struct CacheCtx<'a> {
    pub tracker: &'a AccessTracker,
    pub weights: [f64; 4],
    pub now_us: u64,
    pub t_up: f64,
    pub theta_d: f64,
}

/// Classification relative to the largest value in the cache. Entries at or
/// above half the maximum that are neither popular nor high-degree count as
/// normal.
pub fn classify(v: f64, max_v: f64, popular: bool, mean_degree: f64, theta_d: f64) -> EvictionClass {
    if v >= 0.5 * max_v && (popular || mean_degree >= theta_d) {
        EvictionClass::Protected
    } else if v < 0.2 * max_v {
        EvictionClass::Evictable
    } else {
        EvictionClass::Normal
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvictOutcome {
    pub evicted: Vec<PathId>,
    pub evictable: usize,
    pub normal: usize,
    /// Target unmet because only protected entries remained.
    pub blocked: bool,
    pub utilization_before: f64,
    pub utilization_after: f64,
}

/// Tiered eviction: nothing while utilization ≤ `T_up`; otherwise every
/// evictable entry, then normal entries by ascending value until utilization
/// reaches `T_low`. Protected entries stay.
pub fn evict(entries: &mut BTreeMap<PathId, CacheEntry>, capacity: usize, ctx: &CacheCtx) -> EvictOutcome {
    let util = |n: usize| n as f64 / capacity as f64;
    let before = util(entries.len());
    let mut out = EvictOutcome { utilization_before: before, utilization_after: before, ..Default::default() };
    if before <= ctx.t_up {
        return out;
    }
    let top = ctx.tracker.top_patterns();
    let scored: Vec<(PathId, f64, EvictionClass)> = {
        let vals: Vec<(PathId, f64, &CacheEntry)> =
            entries.iter().map(|(&p, e)| (p, e.value(ctx), e)).collect();
        let max_v = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        vals.into_iter()
            .map(|(p, v, e)| (p, v, classify(v, max_v, top.contains(&e.pattern), e.mean_degree, ctx.theta_d)))
            .collect()
    };
    for &(p, _, c) in &scored {
        if c == EvictionClass::Evictable {
            entries.remove(&p);
            out.evicted.push(p);
            out.evictable += 1;
        }
    }
    let target = t_low(ctx.t_up);
    let mut normals: Vec<(PathId, f64)> =
        scored.iter().filter(|s| s.2 == EvictionClass::Normal).map(|s| (s.0, s.1)).collect();
    normals.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    for (p, _) in normals {
        if util(entries.len()) <= target + 1e-12 {
            break;
        }
        entries.remove(&p);
        out.evicted.push(p);
        out.normal += 1;
    }
    out.utilization_after = util(entries.len());
    if out.utilization_after > target + 1e-12 {
        out.blocked = true;
        log::debug!("eviction target {target:.2} unmet: {} protected entries remain", entries.len());
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierStats {
    pub hits: u64,
    pub admitted: u64,
    pub rejected: u64,
    pub evicted_evictable: u64,
    pub evicted_normal: u64,
    pub evicted_lru: u64,
    /// Unprotected entries replaced by a stronger newcomer in a full cache.
    pub displaced: u64,
    /// Must stay 0.
    pub evicted_protected: u64,
}

/// A single cache tier.
pub trait PathCache: std::fmt::Debug {
    fn contains(&self, p: PathId) -> bool;
    fn on_hit(&mut self, p: PathId, ctx: &CacheCtx);
    /// Offers a path fetched from a lower tier; returns whether it was kept.
    fn offer(&mut self, p: PathId, ctx: &CacheCtx) -> bool;
    /// Epoch boundary: refresh features and enforce thresholds.
    fn refresh(&mut self, ctx: &CacheCtx);
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn capacity(&self) -> usize;
    fn stats(&self) -> TierStats;
}

#[derive(Debug, Clone)]
pub struct AdaptiveCache {
    capacity: usize,
    entries: BTreeMap<PathId, CacheEntry>,
    stats: TierStats,
    pub last_eviction: Option<EvictOutcome>,
}

impl AdaptiveCache {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "cache capacity must be positive");
        Self { capacity, entries: BTreeMap::new(), stats: TierStats::default(), last_eviction: None }
    }

    pub fn entries(&self) -> &BTreeMap<PathId, CacheEntry> {
        &self.entries
    }

    pub fn insert_entry(&mut self, e: CacheEntry) {
        self.entries.insert(e.path_id, e);
    }

    /// Admission bar: the lowest cached value when full, else 0.
    pub fn admission_threshold(&self, ctx: &CacheCtx) -> f64 {
        if self.entries.len() < self.capacity {
            return 0.0;
        }
        self.entries.values().map(|e| e.value(ctx)).fold(f64::INFINITY, f64::min)
    }

    fn run_eviction(&mut self, ctx: &CacheCtx) {
        let protected_before: Vec<PathId> = self.protected(ctx);
        let out = evict(&mut self.entries, self.capacity, ctx);
        self.stats.evicted_evictable += out.evictable as u64;
        self.stats.evicted_normal += out.normal as u64;
        self.stats.evicted_protected += out.evicted.iter().filter(|p| protected_before.contains(p)).count() as u64;
        if !out.evicted.is_empty() || out.blocked {
            self.last_eviction = Some(out);
        }
    }

    pub fn protected(&self, ctx: &CacheCtx) -> Vec<PathId> {
        let vals: Vec<(PathId, f64)> =
            self.entries.iter().map(|(&p, e)| (p, e.value(ctx))).collect();
        let max_v = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        let top = ctx.tracker.top_patterns();
        vals.into_iter()
            .filter(|&(p, v)| {
                let e = &self.entries[&p];
                classify(v, max_v, top.contains(&e.pattern), e.mean_degree, ctx.theta_d) == EvictionClass::Protected
            })
            .map(|(p, _)| p)
            .collect()
    }
}

impl PathCache for AdaptiveCache {
    fn contains(&self, p: PathId) -> bool {
        self.entries.contains_key(&p)
    }

    fn on_hit(&mut self, p: PathId, ctx: &CacheCtx) {
        if let Some(e) = self.entries.get_mut(&p) {
            e.touch(ctx.now_us);
            self.stats.hits += 1;
        }
    }

    /// Below capacity every offer is kept. A full cache admits only values
    /// at or above its minimum and makes room by dropping the weakest
    /// unprotected entry; tiered eviction itself runs at refresh.
    fn offer(&mut self, p: PathId, ctx: &CacheCtx) -> bool {
        if self.entries.contains_key(&p) {
            return true;
        }
        let mut e = CacheEntry::from_tracker(p, ctx.tracker);
        e.touch(ctx.now_us);
        if self.entries.len() >= self.capacity {
            if e.value(ctx) < self.admission_threshold(ctx) {
                self.stats.rejected += 1;
                return false;
            }
            let protected = self.protected(ctx);
            let victim = self
                .entries
                .iter()
                .filter(|(q, _)| !protected.contains(q))
                .map(|(&q, e)| (q, e.value(ctx)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let Some((q, _)) = victim else {
                self.stats.rejected += 1;
                return false;
            };
            self.entries.remove(&q);
            self.stats.displaced += 1;
        }
        self.entries.insert(p, e);
        self.stats.admitted += 1;
        true
    }

    fn refresh(&mut self, ctx: &CacheCtx) {
        for (p, e) in self.entries.iter_mut() {
            let last = e.last_access_us;
            let fresh = CacheEntry::from_tracker(*p, ctx.tracker);
            *e = CacheEntry { last_access_us: last.max(fresh.last_access_us), ..fresh };
        }
        self.run_eviction(ctx);
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn capacity(&self) -> usize {
        self.capacity
    }

    fn stats(&self) -> TierStats {
        self.stats
    }
}

/// Least-recently-used baseline.
#[derive(Debug, Clone)]
pub struct LruCache {
    capacity: usize,
    tick: u64,
    by_path: HashMap<PathId, u64>,
    by_tick: BTreeMap<u64, PathId>,
    stats: TierStats,
}

impl LruCache {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "cache capacity must be positive");
        Self { capacity, tick: 0, by_path: HashMap::new(), by_tick: BTreeMap::new(), stats: TierStats::default() }
    }

    fn bump(&mut self, p: PathId) {
        if let Some(t) = self.by_path.remove(&p) {
            self.by_tick.remove(&t);
        }
        self.tick += 1;
        self.by_path.insert(p, self.tick);
        self.by_tick.insert(self.tick, p);
    }
}

impl PathCache for LruCache {
    fn contains(&self, p: PathId) -> bool {
        self.by_path.contains_key(&p)
    }

    fn on_hit(&mut self, p: PathId, _: &CacheCtx) {
        if self.contains(p) {
            self.bump(p);
            self.stats.hits += 1;
        }
    }

    fn offer(&mut self, p: PathId, _: &CacheCtx) -> bool {
        if !self.contains(p) && self.by_path.len() == self.capacity {
            let (&t, &old) = self.by_tick.iter().next().expect("full cache");
            self.by_tick.remove(&t);
            self.by_path.remove(&old);
            self.stats.evicted_lru += 1;
        }
        self.bump(p);
        self.stats.admitted += 1;
        true
    }

    fn refresh(&mut self, _: &CacheCtx) {}

    fn len(&self) -> usize {
        self.by_path.len()
    }

    fn capacity(&self) -> usize {
        self.capacity
    }

    fn stats(&self) -> TierStats {
        self.stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(p: PathId, f1: f64, pattern: u64, degree: f64) -> CacheEntry {
        CacheEntry {
            path_id: p,
            f0: [f1, 0.0, 0.0, 0.0],
            born_us: [0; 4],
            last_access_us: 0,
            match_freq: 0,
            total_freq: 0,
            mean_degree: degree,
            pattern,
        }
    }

    fn ctx(tracker: &AccessTracker, t_up: f64) -> CacheCtx<'_> {
        CacheCtx { tracker, weights: [1.0, 0.0, 0.0, 0.0], now_us: 0, t_up, theta_d: 10.0 }
    }

    #[test]
    fn below_trigger_is_a_no_op() {
        let t = AccessTracker::new(1);
        let mut m: BTreeMap<_, _> = (0..8).map(|p| (p, entry(p, 0.01 * p as f64, 0, 1.0))).collect();
        let out = evict(&mut m, 10, &ctx(&t, 0.8));
        assert!(out.evicted.is_empty());
        assert_eq!(m.len(), 8);
    }

    #[test]
    fn all_protected_blocks() {
        let t = AccessTracker::new(1);
        let mut m: BTreeMap<_, _> = (0..10).map(|p| (p, entry(p, 0.9, 0, 20.0))).collect();
        let out = evict(&mut m, 10, &ctx(&t, 0.8));
        assert!(out.evicted.is_empty() && out.blocked);
        assert_eq!(out.utilization_after, 1.0);
    }

    #[test]
    fn evictable_then_normals_by_value() {
        let t = AccessTracker::new(1);
        // max V = 1.0 (protected by degree); 0.1 and 0.15 evictable;
        // normals at 0.2..0.45.
        let vals = [1.0, 0.1, 0.45, 0.2, 0.15, 0.3, 0.25, 0.4, 0.35, 0.6];
        let mut m: BTreeMap<_, _> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as PathId, entry(i as PathId, v, 0, if i == 0 { 12.0 } else { 1.0 })))
            .collect();
        let out = evict(&mut m, 10, &ctx(&t, 0.8));
        // T_low = 0.7: two evictables, then the lowest normal (0.2).
        assert_eq!(out.evicted, vec![1, 4, 3]);
        assert_eq!(m.len(), 7);
        assert!(m.contains_key(&0));
    }

    #[test]
    fn lru_evicts_oldest() {
        let t = AccessTracker::new(1);
        let c = ctx(&t, 0.8);
        let mut l = LruCache::new(2);
        l.offer(1, &c);
        l.offer(2, &c);
        l.on_hit(1, &c);
        l.offer(3, &c);
        assert!(l.contains(1) && l.contains(3) && !l.contains(2));
    }
}
