use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GraphError, LabeledGraph, QueryGraph, QUERY_MAX_VERTICES, QUERY_MIN_VERTICES};
use crate::VertexId;

/// Walks that fail to collect enough distinct vertices or miss the degree
/// window are retried this many times.
const MAX_SAMPLING_ATTEMPTS: usize = 100;

/// Newman–Watts–Strogatz graph: a ring lattice where each vertex links to its
/// `k/2` nearest neighbours on each side, plus shortcuts. Each vertex, with
/// probability `p_add`, gains one edge to a uniformly chosen non-neighbour.
/// Ring edges are never removed.
pub fn generate_nws(
    n: usize,
    k: usize,
    p_add: f64,
    label_count: u32,
    seed: u64,
) -> Result<LabeledGraph, GraphError> {
    if k < 2 || !k.is_multiple_of(2) || n <= k {
        return Err(GraphError::Config(format!(
            "NWS needs n > k >= 2 with k even, got n={n}, k={k}"
        )));
    }
    if !(0.0..=1.0).contains(&p_add) {
        return Err(GraphError::Config(format!("p_add {p_add} outside [0, 1]")));
    }
    if label_count == 0 {
        return Err(GraphError::Config("label_count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..label_count)).collect();
    let mut adj: Vec<BTreeSet<VertexId>> = vec![BTreeSet::new(); n];
    let mut edges = Vec::with_capacity(n * k / 2 + n);
    let mut add = |adj: &mut Vec<BTreeSet<VertexId>>, u: usize, v: usize| {
        if adj[u].insert(v as VertexId) {
            adj[v].insert(u as VertexId);
            edges.push((u as VertexId, v as VertexId));
        }
    };
    for u in 0..n {
        for j in 1..=k / 2 {
            add(&mut adj, u, (u + j) % n);
        }
    }
    for u in 0..n {
        if !rng.gen_bool(p_add) {
            continue;
        }
        let candidates: Vec<usize> = (0..n)
            .filter(|&v| v != u && !adj[u].contains(&(v as VertexId)))
            .collect();
        if let Some(&v) = candidates.choose(&mut rng) {
            add(&mut adj, u, v);
        }
    }
    LabeledGraph::from_edges(labels, label_count, &edges)
}

/// Samples a connected query of `n_q` vertices: a random walk collects
/// distinct vertices, and the induced subgraph is accepted when its average
/// degree lies in `[avg_deg_lo, avg_deg_hi]`. Query vertex `i` is the `i`-th
/// distinct vertex visited; labels come from `g`.
pub fn sample_query_graph(
    g: &LabeledGraph,
    n_q: usize,
    avg_deg_lo: f64,
    avg_deg_hi: f64,
    seed: u64,
) -> Result<QueryGraph, GraphError> {
    if !(QUERY_MIN_VERTICES..=QUERY_MAX_VERTICES).contains(&n_q) {
        return Err(GraphError::Config(format!(
            "query size {n_q} outside {QUERY_MIN_VERTICES}..={QUERY_MAX_VERTICES}"
        )));
    }
    // No n_q-vertex graph exceeds average degree n_q - 1, so a wider upper
    // bound is clamped rather than refused.
    let max_avg = (n_q - 1) as f64;
    let avg_deg_hi = avg_deg_hi.min(max_avg);
    if !(1.0 <= avg_deg_lo && avg_deg_lo <= avg_deg_hi) {
        return Err(GraphError::Config(format!(
            "average degree range [{avg_deg_lo}, {avg_deg_hi}] not within [1, {max_avg}]"
        )));
    }
    if g.vertex_count() < n_q {
        return Err(GraphError::Config(format!(
            "graph has {} vertices, query needs {n_q}",
            g.vertex_count()
        )));
    }
    let starts: Vec<VertexId> = (0..g.vertex_count() as VertexId)
        .filter(|&v| g.degree(v) > 0)
        .collect();
    if starts.is_empty() {
        return Err(GraphError::SamplingExhausted(0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step_budget = 20 * n_q;
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let mut current = *starts.choose(&mut rng).unwrap();
        let mut visited = vec![current];
        for _ in 0..step_budget {
            if visited.len() == n_q {
                break;
            }
            current = *g.neighbors(current).choose(&mut rng).unwrap();
            if !visited.contains(&current) {
                visited.push(current);
            }
        }
        if visited.len() < n_q {
            continue;
        }
        let sub = g.induced_subgraph(&visited);
        let avg = 2.0 * sub.edge_count() as f64 / n_q as f64;
        if avg + 1e-9 >= avg_deg_lo && avg <= avg_deg_hi + 1e-9 {
            return QueryGraph::new(sub);
        }
    }
    Err(GraphError::SamplingExhausted(MAX_SAMPLING_ATTEMPTS))
}
