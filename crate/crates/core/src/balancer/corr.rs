//! Online shard correlation blending static path counts with a sliding
//! window of co-queried shard pairs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::partition::StaticCorrelation;
use crate::ShardId;

pub const T_DECAY_S: f64 = 60.0;
pub const ALPHA_0: f64 = 0.7;
pub const T_UPDATE_US: u64 = 10_000_000;
pub const EPSILON: f64 = 1e-6;
/// Pairs at or above this correlation should stay together.
pub const CORR_THRESHOLD: f64 = 0.2;

/// `max(0.7 - 0.7 t / 60, 0)`.
pub fn alpha_decay(t_seconds: f64) -> f64 {
    (ALPHA_0 - ALPHA_0 * t_seconds / T_DECAY_S).max(0.0)
}

/// Co-query window, runtime origin and migration queue.
#[derive(Debug, Clone, Default)]
pub struct CorrState {
    start_us: u64,
    now_us: u64,
    window: VecDeque<(u64, Vec<ShardId>)>,
    counts: BTreeMap<(ShardId, ShardId), u64>,
    pub migrating: BTreeSet<ShardId>,
}

impl CorrState {
    pub fn new(start_us: u64) -> Self {
        Self {
            start_us,
            now_us: start_us,
            ..Self::default()
        }
    }

    /// Records that one query touched `shards` at `time_us`.
    pub fn record(&mut self, time_us: u64, shards: &BTreeSet<ShardId>) {
        self.advance(time_us);
        let list: Vec<ShardId> = shards.iter().copied().collect();
        for (a, &i) in list.iter().enumerate() {
            for &j in &list[a + 1..] {
                *self.counts.entry((i, j)).or_default() += 1;
            }
        }
        self.window.push_back((time_us, list));
    }

    /// Moves the clock forward and expires entries older than the window.
    pub fn advance(&mut self, now_us: u64) {
        self.now_us = self.now_us.max(now_us);
        while let Some((t, _)) = self.window.front() {
            if t + T_UPDATE_US > self.now_us {
                break;
            }
            let (_, list) = self.window.pop_front().unwrap();
            for (a, &i) in list.iter().enumerate() {
                for &j in &list[a + 1..] {
                    let c = self.counts.get_mut(&(i, j)).expect("counted on entry");
                    *c -= 1;
                    if *c == 0 {
                        self.counts.remove(&(i, j));
                    }
                }
            }
        }
    }

    pub fn n_co_query(&self, i: ShardId, j: ShardId) -> u64 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.counts.get(&key).copied().unwrap_or(0)
    }

    pub fn max_n_co_query(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Seconds since the runtime origin.
    pub fn runtime_s(&self) -> f64 {
        (self.now_us - self.start_us) as f64 / 1e6
    }
}

/// `W_label (A + B) / (C + D + 1)`, zeroed when `j` is queued for migration.
pub fn dynamic_corr(i: ShardId, j: ShardId, s: &StaticCorrelation, state: &CorrState) -> f64 {
    if state.migrating.contains(&j) {
        return 0.0;
    }
    let (iu, ju) = (i as usize, j as usize);
    let w = s.w_label(iu, ju);
    if w == 0.0 {
        return 0.0;
    }
    let alpha = alpha_decay(state.runtime_s());
    let max_co = state.max_n_co_query() as f64;
    let eta = s.max_n_cross as f64 / (max_co + EPSILON);
    let a = alpha * s.n_cross(iu, ju) as f64;
    let b = (1.0 - alpha) * state.n_co_query(i, j) as f64 * eta;
    let c = alpha * s.n_cross_total as f64;
    let d = (1.0 - alpha) * max_co;
    w * (a + b) / (c + d + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[ShardId]) -> BTreeSet<ShardId> {
        xs.iter().copied().collect()
    }

    fn fixture() -> StaticCorrelation {
        StaticCorrelation::from_matrices(
            3,
            vec![0, 4, 1, 4, 0, 2, 1, 2, 0],
            vec![1.0, 0.5, 0.0, 0.5, 1.0, 0.25, 0.0, 0.25, 1.0],
        )
    }

    #[test]
    fn alpha_schedule() {
        assert_eq!(alpha_decay(0.0), 0.7);
        assert_eq!(alpha_decay(60.0), 0.0);
        assert!((alpha_decay(30.0) - 0.35).abs() < 1e-12);
        assert_eq!(alpha_decay(600.0), 0.0);
    }

    #[test]
    fn window_expires_after_ten_seconds() {
        let mut st = CorrState::new(0);
        st.record(0, &set(&[0, 1]));
        st.record(5_000_000, &set(&[0, 1, 2]));
        assert_eq!(st.n_co_query(1, 0), 2);
        st.advance(10_000_000);
        assert_eq!(st.n_co_query(0, 1), 1);
        st.advance(15_000_000);
        assert_eq!(st.n_co_query(0, 1), 0);
        assert_eq!(st.window_len(), 0);
    }

    #[test]
    fn indicator_and_label_gate() {
        let s = fixture();
        let mut st = CorrState::new(0);
        st.record(0, &set(&[0, 1]));
        assert!(dynamic_corr(0, 1, &s, &st) > 0.0);
        assert_eq!(dynamic_corr(0, 2, &s, &st), 0.0);
        st.migrating.insert(1);
        assert_eq!(dynamic_corr(0, 1, &s, &st), 0.0);
    }

    #[test]
    fn static_only_at_start() {
        let s = fixture();
        let st = CorrState::new(0);
        // α = 0.7, no co-queries: 0.5 · 0.7·4 / (0.7·7 + 1)
        let want = 0.5 * 0.7 * 4.0 / (0.7 * 7.0 + 1.0);
        assert!((dynamic_corr(0, 1, &s, &st) - want).abs() < 1e-12);
    }
}
