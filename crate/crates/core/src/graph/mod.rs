//! Vertex-labeled undirected graphs, generators, path enumeration and the
//! brute-force matching oracle.

mod generate;
mod io;
mod oracle;
mod paths;

use std::collections::VecDeque;
use std::ops::Deref;

use thiserror::Error;

use crate::{Label, ShardId, VertexId};

pub use generate::{generate_nws, sample_query_graph};
pub use io::{load_graph, parse_graph, write_graph};
pub use oracle::{brute_force_match, is_valid_match, ORACLE_MAX_QUERY};
pub use paths::{enumerate_paths, MAX_PATH_LEN};

/// Smallest and largest query accepted by [`QueryGraph::new`].
pub const QUERY_MIN_VERTICES: usize = 2;
pub const QUERY_MAX_VERTICES: usize = 16;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("query sampling exhausted after {0} attempts")]
    SamplingExhausted(usize),
    #[error("query has {0} vertices, the oracle accepts at most {ORACLE_MAX_QUERY}")]
    QueryTooLarge(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Undirected, vertex-labeled simple graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    adj: Vec<Vec<VertexId>>,
    labels: Vec<Label>,
    label_count: u32,
    edge_count: usize,
}

impl LabeledGraph {
    /// Builds a graph from per-vertex labels and an undirected edge list.
    ///
    /// Rejects self-loops, duplicate edges (in either orientation), endpoints
    /// out of range and labels outside `0..label_count`.
    pub fn from_edges(
        labels: Vec<Label>,
        label_count: u32,
        edges: &[(VertexId, VertexId)],
    ) -> Result<Self, GraphError> {
        let n = labels.len();
        if let Some((v, l)) = labels.iter().enumerate().find(|(_, &l)| l >= label_count) {
            return Err(GraphError::Invalid(format!(
                "vertex {v} has label {l}, alphabet size is {label_count}"
            )));
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(GraphError::Invalid(format!(
                    "edge ({u}, {v}) references a vertex outside 0..{n}"
                )));
            }
            if u == v {
                return Err(GraphError::Invalid(format!("self-loop on vertex {u}")));
            }
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for (u, list) in adj.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(GraphError::Invalid(format!("duplicate edge ({u}, {})", w[0])));
            }
        }
        Ok(Self {
            adj,
            labels,
            label_count,
            edge_count: edges.len(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn label_count(&self) -> u32 {
        self.label_count
    }

    pub fn label(&self, v: VertexId) -> Label {
        self.labels[v as usize]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: VertexId) -> u32 {
        self.adj[v as usize].len() as u32
    }

    pub fn degrees(&self) -> Vec<u32> {
        self.adj.iter().map(|a| a.len() as u32).collect()
    }

    pub fn max_degree(&self) -> u32 {
        self.adj.iter().map(|a| a.len() as u32).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: VertexId, v: VertexId) -> bool {
        self.adj
            .get(u as usize)
            .is_some_and(|a| a.binary_search(&v).is_ok())
    }

    /// Edges with `u < v`, in ascending `(u, v)` order.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, list)| {
            let u = u as VertexId;
            list.iter().copied().filter(move |&v| u < v).map(move |v| (u, v))
        })
    }

    pub fn is_connected(&self) -> bool {
        let n = self.vertex_count();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0 as VertexId]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == n
    }

    /// Subgraph induced by `vertices`; vertex `i` of the result is `vertices[i]`.
    pub fn induced_subgraph(&self, vertices: &[VertexId]) -> LabeledGraph {
        let mut local = std::collections::HashMap::with_capacity(vertices.len());
        for (i, &v) in vertices.iter().enumerate() {
            local.insert(v, i as VertexId);
        }
        let mut edges = Vec::new();
        for (i, &v) in vertices.iter().enumerate() {
            for &w in self.neighbors(v) {
                if let Some(&j) = local.get(&w) {
                    if (i as VertexId) < j {
                        edges.push((i as VertexId, j));
                    }
                }
            }
        }
        let labels = vertices.iter().map(|&v| self.label(v)).collect();
        LabeledGraph::from_edges(labels, self.label_count, &edges)
            .expect("induced subgraph of a valid graph is valid")
    }

    /// Same graph with vertex `v` renamed to `perm[v]`.
    pub fn permuted(&self, perm: &[VertexId]) -> LabeledGraph {
        assert_eq!(perm.len(), self.vertex_count());
        let mut labels = vec![0; self.vertex_count()];
        for (v, &p) in perm.iter().enumerate() {
            labels[p as usize] = self.labels[v];
        }
        let edges: Vec<_> = self
            .edges()
            .map(|(u, v)| (perm[u as usize], perm[v as usize]))
            .collect();
        LabeledGraph::from_edges(labels, self.label_count, &edges)
            .expect("permutation of a valid graph is valid")
    }
}

/// A connected query graph with 2 to 16 vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryGraph(LabeledGraph);

impl QueryGraph {
    pub fn new(g: LabeledGraph) -> Result<Self, GraphError> {
        let n = g.vertex_count();
        if !(QUERY_MIN_VERTICES..=QUERY_MAX_VERTICES).contains(&n) {
            return Err(GraphError::Invalid(format!(
                "query must have {QUERY_MIN_VERTICES}..={QUERY_MAX_VERTICES} vertices, got {n}"
            )));
        }
        if !g.is_connected() {
            return Err(GraphError::Invalid("query graph is not connected".into()));
        }
        Ok(Self(g))
    }

    pub fn graph(&self) -> &LabeledGraph {
        &self.0
    }

    pub fn into_inner(self) -> LabeledGraph {
        self.0
    }
}

impl Deref for QueryGraph {
    type Target = LabeledGraph;

    fn deref(&self) -> &LabeledGraph {
        &self.0
    }
}

/// A simple path stored in canonical orientation (first vertex id smaller
/// than the last).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathInstance {
    pub vertices: Vec<VertexId>,
    /// Degree of each vertex in the full data graph.
    pub degrees: Vec<u32>,
    pub home_shard: ShardId,
}

impl PathInstance {
    /// Number of edges.
    pub fn len(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self, g: &LabeledGraph) -> Vec<Label> {
        self.vertices.iter().map(|&v| g.label(v)).collect()
    }

    /// Mean vertex degree.
    pub fn mean_degree(&self) -> f64 {
        if self.degrees.is_empty() {
            return 0.0;
        }
        self.degrees.iter().map(|&d| d as f64).sum::<f64>() / self.degrees.len() as f64
    }
}

/// An embedding of a query into the data graph: entry `i` is the image of
/// query vertex `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MatchMapping(pub Vec<VertexId>);

impl MatchMapping {
    pub fn image(&self, query_vertex: VertexId) -> VertexId {
        self.0[query_vertex as usize]
    }

    pub fn pairs(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.0.iter().enumerate().map(|(q, &d)| (q as VertexId, d))
    }
}
