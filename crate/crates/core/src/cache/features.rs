//! Path features, the value function and the threshold tables.

use serde::{Deserialize, Serialize};

use crate::balancer::nearest_rank;
use crate::graph::LabeledGraph;

/// Feature decay time constant in seconds.
pub const TAU_S: f64 = 300.0;
/// Frequency window length in queries.
pub const FREQ_WINDOW_QUERIES: usize = 1000;
/// Distance between `T_up` and `T_low`.
pub const T_LOW_GAP: f64 = 0.1;
pub const THETA_D_FLOOR: f64 = 10.0;

/// `(f1, f2, f3, f4)`: frequency, co-occurrence, recency, match contribution.
pub type Features = [f64; 4];

/// `clamp(f0 · e^{-t/τ}, 0, 1)`.
pub fn decay_feature(f0: f64, t_seconds: f64, tau: f64) -> f64 {
    (f0 * (-t_seconds.max(0.0) / tau).exp()).clamp(0.0, 1.0)
}

/// Raw counters for one path at snapshot time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PathCounters {
    pub freq: u64,
    pub co_count: u64,
    pub last_access_us: u64,
    pub match_freq: u64,
    pub total_freq: u64,
}

/// Window-wide normalizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub max_freq: u64,
    pub max_co_count: u64,
    pub window_us: u64,
    pub now_us: u64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        (a as f64 / b as f64).clamp(0.0, 1.0)
    }
}

/// `clamp(1 - (now - last) / window, 0, 1)`.
pub fn recency(last_us: u64, now_us: u64, window_us: u64) -> f64 {
    if window_us == 0 {
        return if now_us <= last_us { 1.0 } else { 0.0 };
    }
    let age = now_us.saturating_sub(last_us) as f64;
    (1.0 - age / window_us as f64).clamp(0.0, 1.0)
}

pub fn feature_snapshot(c: &PathCounters, w: &WindowStats) -> Features {
    [
        ratio(c.freq, w.max_freq),
        ratio(c.co_count, w.max_co_count),
        recency(c.last_access_us, w.now_us, w.window_us),
        ratio(c.match_freq, c.total_freq),
    ]
}

/// `α f1 + β f2 + γ f3 d̄ + δ f4`. Not bounded by 1.
pub fn cache_value(f: &Features, w: &[f64; 4], mean_degree: f64) -> f64 {
    w[0] * f[0] + w[1] * f[1] + w[2] * f[2] * mean_degree + w[3] * f[3]
}

/// Eviction trigger `T_up` from hit rate and latency (ms). Cells the table
/// leaves open resolve to 0.90.
pub fn trigger_threshold(hit_rate: f64, latency_ms: f64) -> f64 {
    if hit_rate < 0.6 || latency_ms > 20.0 {
        0.80
    } else if hit_rate >= 0.8 && latency_ms <= 10.0 {
        0.95
    } else {
        0.90
    }
}

pub fn t_low(t_up: f64) -> f64 {
    t_up - T_LOW_GAP
}

/// `max(q95(degrees) / 2, 10)`.
pub fn degree_threshold(g: &LabeledGraph) -> f64 {
    let degrees: Vec<f64> = g.degrees().into_iter().map(f64::from).collect();
    if degrees.is_empty() {
        return THETA_D_FLOOR;
    }
    (nearest_rank(&degrees, 0.95) / 2.0).max(THETA_D_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncSettings {
    pub window_s: u64,
    pub weight_sync_s: u64,
    pub quota_sync_s: u64,
}

/// Statistics window from query rate `F`; sync cadence from the number of
/// queries in the 100-query sliding window that fell inside the last interval.
pub fn window_and_sync(qps: f64, window_count: usize) -> SyncSettings {
    let window_s = if qps >= 20.0 {
        30
    } else if qps > 5.0 {
        60
    } else {
        120
    };
    let weight_sync_s = if window_count >= 50 {
        30
    } else if window_count > 20 {
        60
    } else {
        120
    };
    SyncSettings {
        window_s,
        weight_sync_s,
        quota_sync_s: 2 * weight_sync_s,
    }
}
