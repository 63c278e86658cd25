//! Sliding 1000-query window of path accesses feeding the features.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::features::{feature_snapshot, Features, PathCounters, WindowStats, FREQ_WINDOW_QUERIES};
use crate::PathId;

/// Co-occurrence reference set size.
pub const CO_TOP: usize = 100;
/// Label patterns whose paths may be protected.
pub const PROTECTED_PATTERNS: usize = 50;

/// One path touched by a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Access {
    pub path: PathId,
    /// Label-key fingerprint.
    pub pattern: u64,
    pub mean_degree: f64,
    /// Whether the path contributed to a final match.
    pub matched: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathMeta {
    pub pattern: u64,
    pub mean_degree: f64,
    pub match_freq: u64,
    pub total_freq: u64,
    pub last_access_us: u64,
}

/// Multiset of counts with O(log n) maximum.
#[derive(Debug, Clone, Default)]
struct CountMax(BTreeMap<u64, usize>);

impl CountMax {
    fn shift(&mut self, old: u64, new: u64) {
        if old > 0 {
            let e = self.0.get_mut(&old).expect("tracked count");
            *e -= 1;
            if *e == 0 {
                self.0.remove(&old);
            }
        }
        if new > 0 {
            *self.0.entry(new).or_default() += 1;
        }
    }
    fn max(&self) -> u64 {
        self.0.keys().next_back().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
struct QueryRecord {
    paths: Vec<PathId>,
    co: Vec<u64>,
    patterns: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct AccessTracker {
    window: VecDeque<QueryRecord>,
    capacity: usize,
    freq: HashMap<PathId, u64>,
    co: HashMap<PathId, u64>,
    pattern_freq: HashMap<u64, u64>,
    freq_max: CountMax,
    co_max: CountMax,
    meta: HashMap<PathId, PathMeta>,
    top_paths: BTreeSet<PathId>,
    top_patterns: BTreeSet<u64>,
    pub window_us: u64,
    pub now_us: u64,
}

fn bump(map: &mut HashMap<PathId, u64>, max: &mut CountMax, k: PathId, delta: i64) {
    let old = map.get(&k).copied().unwrap_or(0);
    let new = (old as i64 + delta) as u64;
    max.shift(old, new);
    if new == 0 {
        map.remove(&k);
    } else {
        map.insert(k, new);
    }
}

impl AccessTracker {
    pub fn new(window_us: u64) -> Self {
        Self::with_capacity(FREQ_WINDOW_QUERIES, window_us)
    }

    pub fn with_capacity(queries: usize, window_us: u64) -> Self {
        Self {
            window: VecDeque::new(),
            capacity: queries.max(1),
            freq: HashMap::new(),
            co: HashMap::new(),
            pattern_freq: HashMap::new(),
            freq_max: CountMax::default(),
            co_max: CountMax::default(),
            meta: HashMap::new(),
            top_paths: BTreeSet::new(),
            top_patterns: BTreeSet::new(),
            window_us,
            now_us: 0,
        }
    }

    /// Records one query's distinct path accesses.
    pub fn record_query(&mut self, now_us: u64, accesses: &[Access]) {
        self.now_us = self.now_us.max(now_us);
        let mut seen = BTreeSet::new();
        let distinct: Vec<&Access> = accesses.iter().filter(|a| seen.insert(a.path)).collect();
        let in_top = distinct.iter().filter(|a| self.top_paths.contains(&a.path)).count() as u64;
        let mut rec = QueryRecord { paths: Vec::new(), co: Vec::new(), patterns: Vec::new() };
        let mut patterns = BTreeSet::new();
        for a in &distinct {
            bump(&mut self.freq, &mut self.freq_max, a.path, 1);
            let own = self.top_paths.contains(&a.path) as u64;
            let co = in_top - own;
            if co > 0 {
                bump(&mut self.co, &mut self.co_max, a.path, co as i64);
            }
            let m = self.meta.entry(a.path).or_insert(PathMeta {
                pattern: a.pattern,
                mean_degree: a.mean_degree,
                match_freq: 0,
                total_freq: 0,
                last_access_us: now_us,
            });
            m.total_freq += 1;
            m.match_freq += a.matched as u64;
            m.last_access_us = now_us;
            if patterns.insert(a.pattern) {
                *self.pattern_freq.entry(a.pattern).or_default() += 1;
            }
            rec.paths.push(a.path);
            rec.co.push(co);
        }
        rec.patterns = patterns.into_iter().collect();
        self.window.push_back(rec);
        if self.window.len() > self.capacity {
            let old = self.window.pop_front().unwrap();
            for (p, co) in old.paths.iter().zip(&old.co) {
                bump(&mut self.freq, &mut self.freq_max, *p, -1);
                if *co > 0 {
                    bump(&mut self.co, &mut self.co_max, *p, -(*co as i64));
                }
            }
            for pat in old.patterns {
                let e = self.pattern_freq.get_mut(&pat).unwrap();
                *e -= 1;
                if *e == 0 {
                    self.pattern_freq.remove(&pat);
                }
            }
        }
    }

    /// Recomputes the Top-100 paths and Top-50 patterns.
    pub fn refresh_top(&mut self) {
        self.top_paths = self.top_by_freq(CO_TOP).into_iter().collect();
        let mut pats: Vec<(u64, u64)> = self.pattern_freq.iter().map(|(&p, &f)| (p, f)).collect();
        pats.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        self.top_patterns = pats.into_iter().take(PROTECTED_PATTERNS).map(|p| p.0).collect();
    }

    /// The `k` most frequent paths in the window, ties by id.
    pub fn top_by_freq(&self, k: usize) -> Vec<PathId> {
        let mut v: Vec<(PathId, u64)> = self.freq.iter().map(|(&p, &f)| (p, f)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v.into_iter().take(k).map(|p| p.0).collect()
    }

    pub fn top_patterns(&self) -> &BTreeSet<u64> {
        &self.top_patterns
    }

    pub fn freq(&self, p: PathId) -> u64 {
        self.freq.get(&p).copied().unwrap_or(0)
    }

    pub fn meta(&self, p: PathId) -> Option<&PathMeta> {
        self.meta.get(&p)
    }

    pub fn stats(&self) -> WindowStats {
        WindowStats {
            max_freq: self.freq_max.max(),
            max_co_count: self.co_max.max(),
            window_us: self.window_us,
            now_us: self.now_us,
        }
    }

    pub fn counters(&self, p: PathId) -> PathCounters {
        let m = self.meta.get(&p);
        PathCounters {
            freq: self.freq(p),
            co_count: self.co.get(&p).copied().unwrap_or(0),
            last_access_us: m.map_or(0, |m| m.last_access_us),
            match_freq: m.map_or(0, |m| m.match_freq),
            total_freq: m.map_or(0, |m| m.total_freq),
        }
    }

    pub fn features(&self, p: PathId) -> Features {
        feature_snapshot(&self.counters(p), &self.stats())
    }

    pub fn queries_in_window(&self) -> usize {
        self.window.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(path: PathId) -> Access {
        Access { path, pattern: path % 3, mean_degree: 2.0, matched: path.is_multiple_of(2) }
    }

    #[test]
    fn counts_expire_with_the_window() {
        let mut t = AccessTracker::with_capacity(2, 1_000_000);
        t.record_query(0, &[acc(1), acc(2), acc(1)]);
        t.record_query(1, &[acc(1)]);
        assert_eq!((t.freq(1), t.freq(2)), (2, 1));
        assert_eq!(t.stats().max_freq, 2);
        t.record_query(2, &[acc(3)]);
        assert_eq!((t.freq(1), t.freq(2), t.freq(3)), (1, 0, 1));
        assert_eq!(t.stats().max_freq, 1);
        // Lifetime match counters do not expire.
        assert_eq!(t.counters(1).total_freq, 2);
    }

    #[test]
    fn co_occurrence_against_top_set() {
        let mut t = AccessTracker::with_capacity(100, 1_000_000);
        for _ in 0..3 {
            t.record_query(0, &[acc(10), acc(11)]);
        }
        t.refresh_top();
        t.record_query(1, &[acc(10), acc(11), acc(12)]);
        // 12 sits with two top paths; 10 and 11 each see one other.
        assert_eq!(t.counters(12).co_count, 2);
        assert_eq!(t.counters(10).co_count, 1);
        assert_eq!(t.features(12)[1], 1.0);
        assert_eq!(t.features(10)[1], 0.5);
    }
}
