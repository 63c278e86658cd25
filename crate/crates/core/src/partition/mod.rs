//! Offline preparation: shard partitioning, hardware-aware deployment,
//! static shard correlation and training-task allocation.

mod correlation;
mod deploy;
mod multilevel;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::LabeledGraph;
use crate::{Label, ShardId, VertexId};

pub use correlation::{static_correlation, StaticCorrelation};
pub use deploy::{
    allocate_shards, assign_training_tasks, perf_scores, DeploymentPlan, MachineSpec,
    MAX_DEPLOY_SPREAD, W_LABEL_AFFINITY,
};
pub use multilevel::{
    edge_cut, partition_assignment, partition_graph, random_assignment, size_bounds,
    DEFAULT_MAX_SPREAD,
};

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("invalid partition request: {0}")]
    Config(String),
    #[error("spread {requested} infeasible for {n} vertices in {m} shards; best achievable is {achievable:.4}")]
    Spread {
        requested: f64,
        achievable: f64,
        n: usize,
        m: usize,
    },
    #[error("shards need {needed} bytes but machines offer {capacity}")]
    Capacity { needed: u64, capacity: u64 },
    #[error("deployment spread {achieved:.4} of total size exceeds the {limit} limit")]
    DeploySpread { achieved: f64, limit: f64 },
}

/// One partition of the data graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shard {
    pub id: ShardId,
    /// Sorted vertex ids.
    pub vertices: Vec<VertexId>,
    /// Global degree of each vertex in `vertices`.
    pub degrees: Vec<u32>,
    /// Edges with both endpoints in the shard, `u < v`.
    pub internal_edges: Vec<(VertexId, VertexId)>,
    /// Sorted vertices with at least one cross-shard edge.
    pub boundary: Vec<VertexId>,
    pub size_bytes: u64,
}

/// Bytes charged per vertex record (id, label, degree, adjacency offset).
pub const VERTEX_BYTES: u64 = 16;
/// Bytes charged per internal edge and per boundary entry.
pub const EDGE_BYTES: u64 = 8;

impl Shard {
    pub fn contains(&self, v: VertexId) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }

    pub fn label_set(&self, g: &LabeledGraph) -> Vec<Label> {
        let mut ls: Vec<Label> = self.vertices.iter().map(|&v| g.label(v)).collect();
        ls.sort_unstable();
        ls.dedup();
        ls
    }
}

/// Builds shard records from a vertex → shard assignment.
pub fn shards_from_assignment(g: &LabeledGraph, assign: &[ShardId], m: usize) -> Vec<Shard> {
    let mut shards: Vec<Shard> = (0..m as ShardId)
        .map(|id| Shard {
            id,
            vertices: Vec::new(),
            degrees: Vec::new(),
            internal_edges: Vec::new(),
            boundary: Vec::new(),
            size_bytes: 0,
        })
        .collect();
    for v in 0..g.vertex_count() as VertexId {
        let s = &mut shards[assign[v as usize] as usize];
        s.vertices.push(v);
        s.degrees.push(g.degree(v));
        if g.neighbors(v).iter().any(|&w| assign[w as usize] != assign[v as usize]) {
            s.boundary.push(v);
        }
    }
    for (u, v) in g.edges() {
        if assign[u as usize] == assign[v as usize] {
            shards[assign[u as usize] as usize].internal_edges.push((u, v));
        }
    }
    for s in &mut shards {
        s.size_bytes = VERTEX_BYTES * s.vertices.len() as u64
            + EDGE_BYTES * (s.internal_edges.len() + s.boundary.len()) as u64;
    }
    shards
}

/// Vertex → shard lookup table.
pub fn assignment_of(shards: &[Shard], n: usize) -> Vec<ShardId> {
    let mut a = vec![0; n];
    for s in shards {
        for &v in &s.vertices {
            a[v as usize] = s.id;
        }
    }
    a
}

/// Vertex-count spread `(max - min) / mean` of a set of shards.
pub fn vertex_spread(shards: &[Shard]) -> f64 {
    let sizes: Vec<usize> = shards.iter().map(|s| s.vertices.len()).collect();
    let total: usize = sizes.iter().sum();
    if sizes.is_empty() || total == 0 {
        return 0.0;
    }
    let mean = total as f64 / sizes.len() as f64;
    (sizes.iter().max().unwrap() - sizes.iter().min().unwrap()) as f64 / mean
}
