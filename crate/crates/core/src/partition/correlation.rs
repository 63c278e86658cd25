use serde::{Deserialize, Serialize};

use super::{assignment_of, Shard};
use crate::graph::{enumerate_paths, LabeledGraph};
use crate::ShardId;

/// Offline shard-pair correlation: cross-shard path counts and label-set
/// Jaccard similarity, both stored as dense symmetric `m x m` matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticCorrelation {
    pub m: usize,
    n_cross: Vec<u64>,
    w_label: Vec<f64>,
    pub n_cross_total: u64,
    pub max_n_cross: u64,
    pub max_w_label: f64,
}

impl StaticCorrelation {
    pub fn n_cross(&self, i: usize, j: usize) -> u64 {
        self.n_cross[i * self.m + j]
    }

    pub fn w_label(&self, i: usize, j: usize) -> f64 {
        self.w_label[i * self.m + j]
    }

    /// Builds from explicit matrices (row-major), recomputing the globals.
    pub fn from_matrices(m: usize, n_cross: Vec<u64>, w_label: Vec<f64>) -> Self {
        assert_eq!(n_cross.len(), m * m);
        assert_eq!(w_label.len(), m * m);
        let mut c = Self {
            m,
            n_cross,
            w_label,
            n_cross_total: 0,
            max_n_cross: 0,
            max_w_label: 0.0,
        };
        for i in 0..m {
            for j in i + 1..m {
                c.n_cross_total += c.n_cross(i, j);
                c.max_n_cross = c.max_n_cross.max(c.n_cross(i, j));
                c.max_w_label = c.max_w_label.max(c.w_label(i, j));
            }
        }
        c
    }
}

/// Counts, for each shard pair, the canonical paths of up to `max_len` edges
/// touching both shards, and the Jaccard similarity of their label sets.
pub fn static_correlation(shards: &[Shard], g: &LabeledGraph, max_len: usize) -> StaticCorrelation {
    let m = shards.len();
    let assign = assignment_of(shards, g.vertex_count());
    let mut n_cross = vec![0u64; m * m];
    let mut touched: Vec<ShardId> = Vec::with_capacity(max_len + 1);
    for p in enumerate_paths(g, max_len) {
        touched.clear();
        touched.extend(p.vertices.iter().map(|&v| assign[v as usize]));
        touched.sort_unstable();
        touched.dedup();
        for (a, &i) in touched.iter().enumerate() {
            for &j in &touched[a + 1..] {
                n_cross[i as usize * m + j as usize] += 1;
                n_cross[j as usize * m + i as usize] += 1;
            }
        }
    }
    let label_sets: Vec<Vec<u32>> = shards.iter().map(|s| s.label_set(g)).collect();
    let mut w_label = vec![0.0; m * m];
    for i in 0..m {
        w_label[i * m + i] = 1.0;
        for j in i + 1..m {
            let w = jaccard(&label_sets[i], &label_sets[j]);
            w_label[i * m + j] = w;
            w_label[j * m + i] = w;
        }
    }
    StaticCorrelation::from_matrices(m, n_cross, w_label)
}

/// Jaccard similarity of two sorted, deduplicated sets; 0 when both are empty.
fn jaccard(a: &[u32], b: &[u32]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}
