//! Shard and global structural features.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::embed::LabelKey;
use crate::graph::{LabeledGraph, PathInstance, MAX_PATH_LEN};
use crate::partition::Shard;
use crate::ShardId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardFeatureSet {
    pub shard: ShardId,
    /// `r[l-1]` is the fraction of the shard's paths with `l` edges.
    pub r: [f64; MAX_PATH_LEN],
    /// Distinct label sequences.
    pub d_t: u64,
    pub mean_degree: f64,
    pub max_degree: u32,
    /// Power-law exponent of the shard's degree distribution.
    pub gamma: f64,
    /// Set when fewer than two distinct positive degrees made γ undefined.
    pub gamma_undefined: bool,
    pub n_total: u64,
    pub n_l: [u64; MAX_PATH_LEN],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalFeatures {
    pub r: [f64; MAX_PATH_LEN],
    pub d_t: f64,
    pub mean_degree: f64,
    pub max_degree: u32,
    pub gamma: f64,
}

impl GlobalFeatures {
    pub const WIDTH: usize = MAX_PATH_LEN + 4;

    pub fn row(&self) -> [f64; Self::WIDTH] {
        let mut out = [0.0; Self::WIDTH];
        out[..MAX_PATH_LEN].copy_from_slice(&self.r);
        out[MAX_PATH_LEN] = self.d_t;
        out[MAX_PATH_LEN + 1] = self.mean_degree;
        out[MAX_PATH_LEN + 2] = self.max_degree as f64;
        out[MAX_PATH_LEN + 3] = self.gamma;
        out
    }
}

/// Least-squares slope of `log P(d)` on `log d`, negated. Degree-0 vertices
/// are excluded. `None` when fewer than two distinct degrees remain.
pub fn power_law_gamma(degrees: &[u32]) -> Option<f64> {
    let mut hist: BTreeMap<u32, u64> = BTreeMap::new();
    for &d in degrees.iter().filter(|&&d| d >= 1) {
        *hist.entry(d).or_default() += 1;
    }
    if hist.len() < 2 {
        return None;
    }
    let n: u64 = hist.values().sum();
    let pts: Vec<(f64, f64)> = hist
        .iter()
        .map(|(&d, &c)| ((d as f64).ln(), (c as f64 / n as f64).ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(-sxy / sxx)
}

/// Features of one shard from the paths indexed on it. Degrees are global.
pub fn shard_features(shard: &Shard, paths: &[PathInstance], g: &LabeledGraph) -> ShardFeatureSet {
    let mut n_l = [0u64; MAX_PATH_LEN];
    let mut keys = BTreeSet::new();
    for p in paths {
        let l = p.len();
        assert!((1..=MAX_PATH_LEN).contains(&l), "path length {l} outside 1..={MAX_PATH_LEN}");
        n_l[l - 1] += 1;
        keys.insert(LabelKey::from_sequence(&p.labels(g)));
    }
    let n_total: u64 = n_l.iter().sum();
    let mut r = [0.0; MAX_PATH_LEN];
    if n_total > 0 {
        for (ri, &c) in r.iter_mut().zip(&n_l) {
            *ri = c as f64 / n_total as f64;
        }
    }
    let mean_degree = if shard.degrees.is_empty() {
        0.0
    } else {
        shard.degrees.iter().map(|&d| d as f64).sum::<f64>() / shard.degrees.len() as f64
    };
    let gamma = power_law_gamma(&shard.degrees);
    ShardFeatureSet {
        shard: shard.id,
        r,
        d_t: keys.len() as u64,
        mean_degree,
        max_degree: shard.degrees.iter().copied().max().unwrap_or(0),
        gamma: gamma.unwrap_or(0.0),
        gamma_undefined: gamma.is_none(),
        n_total,
        n_l,
    }
}

fn weighted_mean(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (v, w) in pairs {
        num += v * w;
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Path-count-weighted aggregation over shards.
pub fn global_features(shards: &[ShardFeatureSet]) -> GlobalFeatures {
    assert!(!shards.is_empty(), "global features need at least one shard");
    let w = |s: &ShardFeatureSet| s.n_total as f64;
    let mut r = [0.0; MAX_PATH_LEN];
    for (l, rl) in r.iter_mut().enumerate() {
        *rl = weighted_mean(shards.iter().map(|s| (s.r[l], w(s))));
    }
    GlobalFeatures {
        r,
        d_t: weighted_mean(shards.iter().map(|s| (s.d_t as f64, w(s)))),
        mean_degree: weighted_mean(shards.iter().map(|s| (s.mean_degree, w(s)))),
        max_degree: shards.iter().map(|s| s.max_degree).max().unwrap_or(0),
        gamma: weighted_mean(shards.iter().filter(|s| !s.gamma_undefined).map(|s| (s.gamma, w(s)))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::enumerate_paths;
    use crate::partition::shards_from_assignment;

    fn one_shard(g: &LabeledGraph) -> Shard {
        shards_from_assignment(g, &vec![0; g.vertex_count()], 1).remove(0)
    }

    #[test]
    fn star_shard() {
        let g = LabeledGraph::from_edges(vec![0; 6], 1, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]).unwrap();
        let s = one_shard(&g);
        let f = shard_features(&s, &enumerate_paths(&g, 5), &g);
        assert_eq!(f.max_degree, 5);
        assert!((f.mean_degree - 10.0 / 6.0).abs() < 1e-12);
        // Lengths 1 and 2 only, one label: one sequence per length.
        assert_eq!(f.d_t, 2);
        assert!((f.r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(!f.gamma_undefined);
    }

    #[test]
    fn single_edge_paths() {
        let g = LabeledGraph::from_edges(vec![0, 1, 0, 1], 2, &[(0, 1), (2, 3)]).unwrap();
        let s = one_shard(&g);
        let f = shard_features(&s, &enumerate_paths(&g, 5), &g);
        assert_eq!(f.r, [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.d_t, 1);
        assert!(f.gamma_undefined);
        assert_eq!(f.gamma, 0.0);
    }

    #[test]
    fn gamma_recovers_exact_power_law() {
        // P(d) ∝ d^-2 over d ∈ {1, 2, 4}: counts 16, 4, 1.
        let mut degs = vec![1u32; 16];
        degs.extend([2; 4]);
        degs.push(4);
        degs.extend([0; 7]);
        assert!((power_law_gamma(&degs).unwrap() - 2.0).abs() < 1e-12);
    }

    fn fs(n_total: u64, r1: f64) -> ShardFeatureSet {
        ShardFeatureSet {
            shard: 0,
            r: [r1, 1.0 - r1, 0.0, 0.0, 0.0],
            d_t: 3,
            mean_degree: 2.0,
            max_degree: 4,
            gamma: 1.5,
            gamma_undefined: false,
            n_total,
            n_l: [0; MAX_PATH_LEN],
        }
    }

    #[test]
    fn global_aggregation() {
        let a = fs(50, 0.2);
        let g1 = global_features(std::slice::from_ref(&a));
        assert_eq!(g1.r, a.r);
        assert_eq!(g1.gamma, 1.5);
        assert!((global_features(&[fs(50, 0.2), fs(50, 0.4)]).r[0] - 0.3).abs() < 1e-12);
        assert!((global_features(&[fs(10, 1.0), fs(90, 0.0)]).r[0] - 0.1).abs() < 1e-12);
        assert_eq!(global_features(&[fs(10, 1.0), fs(90, 0.0)]).r[2], 0.0);
    }
}
