//! PE-score labels from running the index filter on sampled query paths.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::features::GlobalFeatures;
use super::gbdt::{adaptive_tree_count, GbdtError, GbdtModel};
use super::plan::{candidate_shards, path_feature_row, QueryPath};
use crate::embed::MbrSummary;
use crate::exec::{PathCatalog, ShardIndex};
use crate::graph::{enumerate_paths, QueryGraph, MAX_PATH_LEN};
use crate::Label;

/// Fixed filter cost per annotated path, ms.
pub const FILTER_C0_MS: f64 = 0.1;
/// Filter cost per index node visited, ms.
pub const FILTER_C1_MS: f64 = 0.01;
/// Fraction of enumerated data paths to annotate.
pub const SAMPLE_FRACTION: f64 = 0.01;
pub const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PESample {
    pub path: QueryPath,
    pub features: Vec<f64>,
    pub n_valid: u64,
    pub n_total: u64,
    pub filter_time_ms: f64,
    pub pruning_rate: f64,
    pub pe_score: f64,
    /// Occurrences of the path's label and degree signature in the workload.
    pub weight: f64,
}

/// `(rate, score)` with `rate = 1 - valid/total` and `score = rate / time`.
/// `None` when `total` is zero.
pub fn pe_score(n_valid: u64, n_total: u64, filter_time_ms: f64) -> Option<(f64, f64)> {
    if n_total == 0 {
        return None;
    }
    assert!(filter_time_ms > 0.0, "filter time must be positive");
    let rate = 1.0 - n_valid.min(n_total) as f64 / n_total as f64;
    Some((rate, rate / filter_time_ms))
}

pub fn filter_time_ms(nodes_visited: usize) -> f64 {
    FILTER_C0_MS + FILTER_C1_MS * nodes_visited as f64
}

/// `max(⌈1% · paths⌉, 1000)`.
pub fn sample_target(catalog_len: usize) -> usize {
    ((catalog_len as f64 * SAMPLE_FRACTION).ceil() as usize).max(MIN_SAMPLES)
}

type Signature = (Vec<Label>, Vec<u32>);

fn signature(p: &QueryPath) -> Signature {
    // Orientation-free: the key order, degrees read the same way.
    let rev_labels: Vec<Label> = p.labels.iter().rev().copied().collect();
    if rev_labels < p.labels {
        (rev_labels, p.degrees.iter().rev().copied().collect())
    } else {
        (p.labels.clone(), p.degrees.clone())
    }
}

/// Every simple path of 1..=5 edges in each workload query, in query order.
pub fn workload_paths(queries: &[QueryGraph]) -> Vec<QueryPath> {
    let mut out = Vec::new();
    for q in queries {
        for p in enumerate_paths(q.graph(), MAX_PATH_LEN) {
            out.push(QueryPath::from_vertices(q.graph(), p.vertices));
        }
    }
    out
}

/// Filters each query path against every shard index and records the
/// measured pruning. Takes the first `target` workload paths; paths of a
/// length with no data paths are dropped.
pub fn annotate_samples(
    paths: &[QueryPath],
    target: usize,
    catalog: &PathCatalog,
    indexes: &[ShardIndex],
    global: &GlobalFeatures,
) -> Vec<PESample> {
    let mut freq: HashMap<Signature, u64> = HashMap::new();
    for p in paths {
        *freq.entry(signature(p)).or_default() += 1;
    }
    let routing: Vec<MbrSummary> = indexes.iter().map(|i| i.tree.summary(i.shard)).collect();
    let mut out = Vec::with_capacity(target.min(paths.len()));
    for p in paths.iter().take(target) {
        let o_q = p.embedding(catalog.max_degree);
        let key = p.key();
        let (mut valid, mut nodes) = (0u64, 0usize);
        for idx in indexes {
            let f = idx.tree.filter(&o_q, &key);
            valid += f.ids.len() as u64;
            nodes += f.nodes_visited;
        }
        let total = catalog.len_totals[p.len() - 1];
        let time = filter_time_ms(nodes);
        let Some((rate, score)) = pe_score(valid, total, time) else {
            continue;
        };
        let cross = candidate_shards(&o_q, &routing).len() >= 2;
        out.push(PESample {
            features: path_feature_row(global, p, cross, catalog.max_degree),
            path: p.clone(),
            n_valid: valid,
            n_total: total,
            filter_time_ms: time,
            pruning_rate: rate,
            pe_score: score,
            weight: freq.get(&signature(p)).copied().unwrap_or(1) as f64,
        });
    }
    out
}

/// Weighted squared-loss fit of PE scores.
pub fn train_pe_model(samples: &[PESample], num_trees: usize) -> Result<GbdtModel, GbdtError> {
    let xs: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.pe_score).collect();
    let w: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    GbdtModel::train(&xs, &y, &w, num_trees)
}

/// Trains with the adaptive tree count.
pub fn train_adaptive(samples: &[PESample]) -> Result<GbdtModel, GbdtError> {
    train_pe_model(samples, adaptive_tree_count(samples.len()))
}

/// One line-delimited JSON row per sample.
pub fn export_samples(samples: &[PESample]) -> String {
    samples
        .iter()
        .map(|s| serde_json::to_string(s).expect("samples serialize") + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_nws, sample_query_graph};
    use crate::partition::random_assignment;
    use crate::ranker::{global_features, shard_features};
    use crate::partition::shards_from_assignment;
    use crate::ShardId;

    #[test]
    fn score_formula() {
        assert_eq!(pe_score(20, 100, 2.0), Some((0.8, 0.4)));
        assert_eq!(pe_score(100, 100, 2.0), Some((0.0, 0.0)));
        assert_eq!(pe_score(0, 0, 2.0), None);
        assert!((filter_time_ms(10) - 0.2).abs() < 1e-12);
        assert_eq!(sample_target(50_000), 1000);
        assert_eq!(sample_target(250_000), 2500);
    }

    #[test]
    fn rate_matches_linear_scan() {
        let g = generate_nws(60, 4, 0.2, 3, 11).unwrap();
        let m = 3;
        let assign = random_assignment(g.vertex_count(), m, 11);
        let cat = PathCatalog::build(&g, &assign, m);
        let idx: Vec<ShardIndex> = (0..m as ShardId).map(|s| ShardIndex::build(&cat, s)).collect();
        let shards = shards_from_assignment(&g, &assign, m);
        let feats: Vec<_> = shards.iter().map(|s| shard_features(s, &cat.shard_paths(s.id), &g)).collect();
        let global = global_features(&feats);
        let qs: Vec<QueryGraph> = (0..10).filter_map(|s| sample_query_graph(&g, 4, 1.0, 3.0, s).ok()).collect();
        let paths = workload_paths(&qs);
        let samples = annotate_samples(&paths, 200, &cat, &idx, &global);
        assert!(!samples.is_empty());
        for s in &samples {
            let o_q = s.path.embedding(cat.max_degree);
            let key = s.path.key();
            let same_len: Vec<_> = (0..cat.len() as u64).filter(|&i| cat.path(i).len() == s.path.len()).collect();
            let valid = same_len
                .iter()
                .filter(|&&i| {
                    let e = cat.entry(i);
                    o_q.dominated_by(&e.embedding) && e.key == key
                })
                .count();
            let want = 1.0 - valid as f64 / same_len.len() as f64;
            assert!((s.pruning_rate - want).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&s.pruning_rate));
            assert!(s.filter_time_ms > 0.0 && s.weight >= 1.0);
        }
    }
}
