//! Query path cover and PE-ordered, shard-grouped plans.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::features::GlobalFeatures;
use super::gbdt::GbdtModel;
use crate::embed::{dominance_embedding, DominanceEmbedding, LabelKey, MbrSummary};
use crate::graph::{LabeledGraph, MAX_PATH_LEN};
use crate::{Label, ShardId, VertexId};

/// A simple path in a query graph, with query-graph degrees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPath {
    pub vertices: Vec<VertexId>,
    pub labels: Vec<Label>,
    pub degrees: Vec<u32>,
}

impl QueryPath {
    pub fn from_vertices(q: &LabeledGraph, vertices: Vec<VertexId>) -> Self {
        Self {
            labels: vertices.iter().map(|&v| q.label(v)).collect(),
            degrees: vertices.iter().map(|&v| q.degree(v)).collect(),
            vertices,
        }
    }

    /// Number of edges.
    pub fn len(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn key(&self) -> LabelKey {
        LabelKey::from_sequence(&self.labels)
    }

    /// Embedding against the data graph's maximum degree.
    pub fn embedding(&self, data_max_degree: u32) -> DominanceEmbedding {
        dominance_embedding(&self.degrees, data_max_degree)
    }

    pub fn shares_vertex(&self, other: &QueryPath) -> bool {
        self.vertices.iter().any(|v| other.vertices.contains(v))
    }
}

fn edge(u: VertexId, v: VertexId) -> (VertexId, VertexId) {
    (u.min(v), u.max(v))
}

/// Simple walks from `from` over uncovered edges, avoiding `banned`, each
/// returned as the vertex list after `from`. Includes the empty walk.
fn walks(
    q: &LabeledGraph,
    covered: &BTreeSet<(VertexId, VertexId)>,
    from: VertexId,
    banned: &[VertexId],
    max_edges: usize,
) -> Vec<Vec<VertexId>> {
    fn go(
        q: &LabeledGraph,
        covered: &BTreeSet<(VertexId, VertexId)>,
        stack: &mut Vec<VertexId>,
        banned: &[VertexId],
        max_edges: usize,
        out: &mut Vec<Vec<VertexId>>,
    ) {
        out.push(stack[1..].to_vec());
        if stack.len() > max_edges {
            return;
        }
        let last = *stack.last().unwrap();
        for &n in q.neighbors(last) {
            if covered.contains(&edge(last, n)) || stack.contains(&n) || banned.contains(&n) {
                continue;
            }
            stack.push(n);
            go(q, covered, stack, banned, max_edges, out);
            stack.pop();
        }
    }
    let mut out = Vec::new();
    go(q, covered, &mut vec![from], banned, max_edges, &mut out);
    out
}

/// Edge-disjoint cover of the query by simple paths of at most
/// [`MAX_PATH_LEN`] edges. Each step takes the lowest uncovered edge and
/// extends it into the longest simple path over uncovered edges; ties go to
/// the lexicographically smallest vertex sequence.
pub fn extract_cover(q: &LabeledGraph) -> Vec<QueryPath> {
    let mut all: Vec<(VertexId, VertexId)> = q.edges().map(|(u, v)| edge(u, v)).collect();
    all.sort_unstable();
    let mut covered = BTreeSet::new();
    let mut out = Vec::new();
    for &(u, v) in &all {
        if covered.contains(&(u, v)) {
            continue;
        }
        covered.insert((u, v));
        let mut best: Option<Vec<VertexId>> = None;
        for tail in walks(q, &covered, v, &[u], MAX_PATH_LEN - 1) {
            let room = MAX_PATH_LEN - 1 - tail.len();
            let mut banned = tail.clone();
            banned.push(v);
            for head in walks(q, &covered, u, &banned, room) {
                let mut seq: Vec<VertexId> = head.iter().rev().copied().collect();
                seq.push(u);
                seq.push(v);
                seq.extend(&tail);
                let better = match &best {
                    None => true,
                    Some(b) => seq.len() > b.len() || (seq.len() == b.len() && seq < *b),
                };
                if better {
                    best = Some(seq);
                }
            }
        }
        let seq = best.expect("the seed edge alone is a path");
        for w in seq.windows(2) {
            covered.insert(edge(w[0], w[1]));
        }
        out.push(QueryPath::from_vertices(q, seq));
    }
    out
}

/// Shards whose routing summary can hold a match for a path with embedding `o_q`.
pub fn candidate_shards(o_q: &DominanceEmbedding, routing: &[MbrSummary]) -> Vec<ShardId> {
    routing
        .iter()
        .filter(|s| s.entry_count > 0 && o_q.dominated_by(&DominanceEmbedding(s.mbr.max)))
        .map(|s| s.shard)
        .collect()
}

/// Width of a path feature row.
pub const FEATURE_WIDTH: usize = GlobalFeatures::WIDTH + 1 + (MAX_PATH_LEN + 1) * 2 + 1 + 1 + 2;

/// Global features, length, padded label key and its index signature slot,
/// cross-shard flag, padded degree sequence and the embedding itself.
pub fn path_feature_row(global: &GlobalFeatures, p: &QueryPath, cross_shard: bool, data_max_degree: u32) -> Vec<f64> {
    let mut row = Vec::with_capacity(FEATURE_WIDTH);
    row.extend(global.row());
    row.push(p.len() as f64);
    let key = p.key();
    for i in 0..=MAX_PATH_LEN {
        row.push(key.labels().get(i).map_or(-1.0, |&l| l as f64));
    }
    row.push(key.signature_slot() as f64);
    row.push(cross_shard as u8 as f64);
    for i in 0..=MAX_PATH_LEN {
        row.push(p.degrees.get(i).map_or(0.0, |&d| d as f64));
    }
    row.extend(p.embedding(data_max_degree).0);
    debug_assert_eq!(row.len(), FEATURE_WIDTH);
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanOrder {
    /// Descending predicted PE with the dependency pass.
    Ranked,
    /// Ascending predicted PE, then the same dependency pass and grouping.
    Reverse,
    /// Cover extraction order, no model.
    Unranked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub path: QueryPath,
    pub pe: f64,
    pub cross_shard: bool,
    pub main_shard: Option<ShardId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanGroup {
    pub shard: Option<ShardId>,
    pub paths: Vec<PlannedPath>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub order: PlanOrder,
    pub groups: Vec<PlanGroup>,
}

impl QueryPlan {
    pub fn paths(&self) -> impl Iterator<Item = &PlannedPath> {
        self.groups.iter().flat_map(|g| g.paths.iter())
    }
}

/// Reorders `items` (already in priority order) so that, among paths sharing
/// a vertex, the shorter one comes first. Each path is emitted as early as
/// possible: when it is reached, its unplaced shorter neighbours are pulled
/// in ahead of it, in priority order.
pub fn dependency_pass(items: Vec<PlannedPath>) -> Vec<PlannedPath> {
    let n = items.len();
    let preds: Vec<Vec<usize>> = (0..n)
        .map(|b| {
            (0..n)
                .filter(|&a| items[a].path.len() < items[b].path.len() && items[a].path.shares_vertex(&items[b].path))
                .collect()
        })
        .collect();
    fn place(i: usize, preds: &[Vec<usize>], placed: &mut [bool], out: &mut Vec<usize>) {
        if placed[i] {
            return;
        }
        for &p in &preds[i] {
            place(p, preds, placed, out);
        }
        placed[i] = true;
        out.push(i);
    }
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for i in 0..n {
        place(i, &preds, &mut placed, &mut order);
    }
    let mut slots: Vec<Option<PlannedPath>> = items.into_iter().map(Some).collect();
    order.into_iter().map(|i| slots[i].take().unwrap()).collect()
}

fn group_by_shard(items: Vec<PlannedPath>) -> Vec<PlanGroup> {
    let mut groups: Vec<PlanGroup> = Vec::new();
    for p in items {
        match groups.iter_mut().find(|g| g.shard == p.main_shard) {
            Some(g) => g.paths.push(p),
            None => groups.push(PlanGroup {
                shard: p.main_shard,
                paths: vec![p],
            }),
        }
    }
    groups
}

/// Orders a query's cover paths for execution.
pub fn rank_plan(
    q: &LabeledGraph,
    model: Option<&GbdtModel>,
    global: &GlobalFeatures,
    routing: &[MbrSummary],
    data_max_degree: u32,
    order: PlanOrder,
) -> QueryPlan {
    let cover = extract_cover(q);
    let mut items: Vec<PlannedPath> = cover
        .into_iter()
        .map(|path| {
            let o_q = path.embedding(data_max_degree);
            let shards = candidate_shards(&o_q, routing);
            let main_shard = shards
                .iter()
                .copied()
                .max_by(|&a, &b| {
                    let count = |s: ShardId| routing.iter().find(|r| r.shard == s).map_or(0, |r| r.entry_count);
                    count(a).cmp(&count(b)).then(b.cmp(&a))
                });
            PlannedPath {
                path,
                pe: 0.0,
                cross_shard: shards.len() >= 2,
                main_shard,
            }
        })
        .collect();
    if order == PlanOrder::Unranked || model.is_none() {
        return QueryPlan {
            order: PlanOrder::Unranked,
            groups: group_by_shard(items),
        };
    }
    let model = model.unwrap();
    let rows: Vec<Vec<f64>> = items
        .iter()
        .map(|p| path_feature_row(global, &p.path, p.cross_shard, data_max_degree))
        .collect();
    for (p, pe) in items.iter_mut().zip(model.predict_batch(&rows)) {
        p.pe = pe;
    }
    // Stable sorts keep cover order among equal scores.
    match order {
        PlanOrder::Reverse => items.sort_by(|a, b| a.pe.total_cmp(&b.pe)),
        _ => items.sort_by(|a, b| b.pe.total_cmp(&a.pe)),
    }
    QueryPlan {
        order,
        groups: group_by_shard(dependency_pass(items)),
    }
}
