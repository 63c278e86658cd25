//! Path catalog, per-shard indexes, candidate binding and the join pipeline
//! that turns plan paths into verified matches.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::embed::{ARTree, IndexEntry, IndexError, LabelKey, Mbr, ShardBlob, ShardRecord};
use crate::graph::{enumerate_paths, is_valid_match, LabeledGraph, MatchMapping, PathInstance, MAX_PATH_LEN};
use crate::ranker::QueryPath;
use crate::{PathId, ShardId, VertexId};

/// Every canonical data path of 1..=5 edges. A path's id is its position;
/// it is indexed on the shard of its first vertex.
#[derive(Debug, Clone)]
pub struct PathCatalog {
    pub paths: Vec<PathInstance>,
    pub keys: Vec<LabelKey>,
    pub max_degree: u32,
    /// Path count per length, `[l-1]`.
    pub len_totals: [u64; MAX_PATH_LEN],
    shard_paths: Vec<Vec<PathId>>,
}

impl PathCatalog {
    pub fn build(g: &LabeledGraph, assign: &[ShardId], m: usize) -> Self {
        let mut paths = enumerate_paths(g, MAX_PATH_LEN);
        let mut shard_paths = vec![Vec::new(); m];
        let mut len_totals = [0u64; MAX_PATH_LEN];
        let mut keys = Vec::with_capacity(paths.len());
        for (id, p) in paths.iter_mut().enumerate() {
            p.home_shard = assign[p.vertices[0] as usize];
            shard_paths[p.home_shard as usize].push(id as PathId);
            len_totals[p.len() - 1] += 1;
            keys.push(LabelKey::from_sequence(&p.labels(g)));
        }
        Self {
            paths,
            keys,
            max_degree: g.max_degree(),
            len_totals,
            shard_paths,
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn shard_count(&self) -> usize {
        self.shard_paths.len()
    }

    pub fn path(&self, id: PathId) -> &PathInstance {
        &self.paths[id as usize]
    }

    pub fn shard_path_ids(&self, shard: ShardId) -> &[PathId] {
        &self.shard_paths[shard as usize]
    }

    pub fn shard_paths(&self, shard: ShardId) -> Vec<PathInstance> {
        self.shard_path_ids(shard).iter().map(|&id| self.path(id).clone()).collect()
    }

    pub fn entry(&self, id: PathId) -> IndexEntry {
        IndexEntry {
            path_id: id,
            embedding: self.path(id).embedding(self.max_degree),
            key: self.keys[id as usize].clone(),
        }
    }

    /// Serializable index payload of one shard.
    pub fn shard_blob(&self, shard: ShardId) -> ShardBlob {
        let records: Vec<ShardRecord> = self
            .shard_path_ids(shard)
            .iter()
            .map(|&id| {
                let e = self.entry(id);
                ShardRecord {
                    path_id: id,
                    embedding: e.embedding,
                    key: e.key,
                    vertices: self.path(id).vertices.clone(),
                }
            })
            .collect();
        let root = records
            .iter()
            .map(|r| Mbr::point(&r.embedding))
            .reduce(|a, b| a.union(&b))
            .unwrap_or(Mbr { min: [0.0; 2], max: [0.0; 2] });
        ShardBlob { shard, root, records }
    }
}

/// A shard's aR-tree plus per-length entry counts.
#[derive(Debug, Clone)]
pub struct ShardIndex {
    pub shard: ShardId,
    pub tree: ARTree,
    pub len_counts: [u64; MAX_PATH_LEN],
}

impl ShardIndex {
    pub fn from_blob(blob: &ShardBlob) -> Result<Self, IndexError> {
        let mut len_counts = [0u64; MAX_PATH_LEN];
        let entries: Vec<IndexEntry> = blob
            .records
            .iter()
            .map(|r| {
                len_counts[r.key.path_len() - 1] += 1;
                IndexEntry {
                    path_id: r.path_id,
                    embedding: r.embedding,
                    key: r.key.clone(),
                }
            })
            .collect();
        Ok(Self {
            shard: blob.shard,
            tree: ARTree::build(entries)?,
            len_counts,
        })
    }

    pub fn build(catalog: &PathCatalog, shard: ShardId) -> Self {
        Self::from_blob(&catalog.shard_blob(shard)).expect("catalog ids are unique")
    }
}

/// Position-aligned images of `qp` on data path `id`: forward and/or
/// reversed, whichever orientation matches every label and has
/// `deg_G ≥ deg_q` at each position.
pub fn bind_path(qp: &QueryPath, data: &PathInstance, g: &LabeledGraph) -> Vec<Vec<VertexId>> {
    let mut out = Vec::new();
    if data.vertices.len() != qp.vertices.len() {
        return out;
    }
    let fits = |vs: &[VertexId]| {
        vs.iter()
            .zip(qp.labels.iter().zip(&qp.degrees))
            .all(|(&v, (&l, &d))| g.label(v) == l && g.degree(v) >= d)
    };
    if fits(&data.vertices) {
        out.push(data.vertices.clone());
    }
    let rev: Vec<VertexId> = data.vertices.iter().rev().copied().collect();
    if rev != data.vertices && fits(&rev) {
        out.push(rev);
    }
    out
}

/// Candidate stage counts. `pruned = candidates_in - candidates_out`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub candidates_in: u64,
    pub pruned: u64,
    pub candidates_out: u64,
}

impl StageCount {
    pub fn new(candidates_in: u64, candidates_out: u64) -> Self {
        assert!(candidates_out <= candidates_in, "stage grew: {candidates_in} -> {candidates_out}");
        Self {
            candidates_in,
            pruned: candidates_in - candidates_out,
            candidates_out,
        }
    }

    pub fn add(&mut self, other: StageCount) {
        self.candidates_in += other.candidates_in;
        self.pruned += other.pruned;
        self.candidates_out += other.candidates_out;
    }
}

/// What one plan path contributed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathFetch {
    /// Data path ids that passed the index filter, with their bindings.
    pub candidates: Vec<(PathId, Vec<Vec<VertexId>>)>,
    /// Same-length entries in the shards consulted.
    pub scanned: u64,
}

impl PathFetch {
    pub fn bindings(&self) -> impl Iterator<Item = (PathId, &Vec<VertexId>)> {
        self.candidates.iter().flat_map(|(id, bs)| bs.iter().map(move |b| (*id, b)))
    }
}

/// Filter plus binding over the given shard indexes.
pub fn fetch_from_indexes<'a>(
    qp: &QueryPath,
    indexes: impl IntoIterator<Item = &'a ShardIndex>,
    catalog: &PathCatalog,
    g: &LabeledGraph,
) -> PathFetch {
    let o_q = qp.embedding(catalog.max_degree);
    let key = qp.key();
    let mut out = PathFetch::default();
    for idx in indexes {
        out.scanned += idx.len_counts[qp.len() - 1];
        for id in idx.tree.filter_candidates(&o_q, &key) {
            out.candidates.push((id, bind_path(qp, catalog.path(id), g)));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecStats {
    /// Index filter: same-length entries scanned → filter survivors.
    pub index: StageCount,
    /// Local check: filter survivors → ids with a valid orientation.
    pub local: StageCount,
    /// Final verification: complete mappings → verified matches.
    pub verify: StageCount,
    /// Partial mappings after each join step, summed.
    pub intermediate: u64,
    /// Execution order actually used, as indexes into the plan.
    pub executed: Vec<usize>,
}

/// Partial mappings over a growing set of bound query vertices.
#[derive(Debug, Clone)]
struct Partial {
    bound: Vec<VertexId>,
    rows: Vec<Vec<VertexId>>,
}

fn join(p: Option<Partial>, qp: &QueryPath, bindings: &[&Vec<VertexId>]) -> Partial {
    let Some(p) = p else {
        let mut rows: Vec<Vec<VertexId>> = bindings.iter().map(|b| (*b).clone()).collect();
        rows.sort_unstable();
        rows.dedup();
        return Partial {
            bound: qp.vertices.clone(),
            rows,
        };
    };
    // Shared query vertices: (position in bound, position in path).
    let shared: Vec<(usize, usize)> = qp
        .vertices
        .iter()
        .enumerate()
        .filter_map(|(j, v)| p.bound.iter().position(|b| b == v).map(|i| (i, j)))
        .collect();
    let fresh: Vec<usize> = (0..qp.vertices.len()).filter(|j| !shared.iter().any(|s| s.1 == *j)).collect();
    let mut table: HashMap<Vec<VertexId>, Vec<usize>> = HashMap::new();
    for (k, b) in bindings.iter().enumerate() {
        table.entry(shared.iter().map(|&(_, j)| b[j]).collect()).or_default().push(k);
    }
    let mut bound = p.bound.clone();
    bound.extend(fresh.iter().map(|&j| qp.vertices[j]));
    let mut rows = Vec::new();
    for r in &p.rows {
        let key: Vec<VertexId> = shared.iter().map(|&(i, _)| r[i]).collect();
        let Some(ks) = table.get(&key) else { continue };
        for &k in ks {
            let b = bindings[k];
            if fresh.iter().any(|&j| r.contains(&b[j])) {
                continue;
            }
            let mut row = r.clone();
            row.extend(fresh.iter().map(|&j| b[j]));
            rows.push(row);
        }
    }
    rows.sort_unstable();
    rows.dedup();
    Partial { bound, rows }
}

/// Runs the plan paths against `fetch`, joining on shared query vertices.
/// A path disconnected from everything bound so far is deferred until a
/// connected one has run. Returns the verified matches, the stage counts,
/// and for each data path id whether it contributed to a match.
pub fn execute_plan(
    g: &LabeledGraph,
    q: &LabeledGraph,
    plan: &[QueryPath],
    fetch: &mut dyn FnMut(usize, &QueryPath) -> PathFetch,
) -> (BTreeSet<MatchMapping>, ExecStats, Vec<(PathId, bool)>) {
    let mut stats = ExecStats::default();
    let mut remaining: Vec<usize> = (0..plan.len()).collect();
    let mut partial: Option<Partial> = None;
    let mut fetched: Vec<(usize, PathFetch)> = Vec::new();
    while !remaining.is_empty() {
        let pos = match &partial {
            None => 0,
            Some(p) => remaining
                .iter()
                .position(|&i| plan[i].vertices.iter().any(|v| p.bound.contains(v)))
                .unwrap_or(0),
        };
        let i = remaining.remove(pos);
        let qp = &plan[i];
        let f = fetch(i, qp);
        let filtered = f.candidates.len() as u64;
        stats.index.add(StageCount::new(f.scanned.max(filtered), filtered));
        let valid = f.candidates.iter().filter(|(_, b)| !b.is_empty()).count() as u64;
        stats.local.add(StageCount::new(filtered, valid));
        let bindings: Vec<&Vec<VertexId>> = f.bindings().map(|(_, b)| b).collect();
        let next = join(partial.take(), qp, &bindings);
        stats.intermediate += next.rows.len() as u64;
        stats.executed.push(i);
        let empty = next.rows.is_empty();
        partial = Some(next);
        fetched.push((i, f));
        if empty {
            break;
        }
    }
    let mut results = BTreeSet::new();
    if let Some(p) = partial.filter(|p| p.bound.len() == q.vertex_count()) {
        let total = p.rows.len() as u64;
        for r in p.rows {
            let mut img = vec![0; q.vertex_count()];
            for (&qv, &dv) in p.bound.iter().zip(&r) {
                img[qv as usize] = dv;
            }
            let m = MatchMapping(img);
            if is_valid_match(g, q, &m) {
                results.insert(m);
            }
        }
        stats.verify = StageCount::new(total, results.len() as u64);
    }
    // A data path contributed if some match maps its plan path onto it.
    let mut contributed = Vec::new();
    for (i, f) in &fetched {
        let qp = &plan[*i];
        for (id, bs) in &f.candidates {
            let hit = bs.iter().any(|b| {
                results
                    .iter()
                    .any(|m| qp.vertices.iter().zip(b).all(|(&u, &v)| m.image(u) == v))
            });
            contributed.push((*id, hit));
        }
    }
    (results, stats, contributed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{brute_force_match, generate_nws, sample_query_graph};
    use crate::partition::random_assignment;
    use crate::ranker::extract_cover;

    fn setup(seed: u64) -> (LabeledGraph, PathCatalog, Vec<ShardIndex>) {
        let g = generate_nws(80, 4, 0.2, 3, seed).unwrap();
        let m = 4;
        let assign = random_assignment(g.vertex_count(), m, seed);
        let cat = PathCatalog::build(&g, &assign, m);
        let idx = (0..m as ShardId).map(|s| ShardIndex::build(&cat, s)).collect();
        (g, cat, idx)
    }

    #[test]
    fn catalog_assigns_home_shards() {
        let (g, cat, idx) = setup(1);
        let assign = random_assignment(g.vertex_count(), 4, 1);
        assert!(cat.paths.iter().all(|p| p.home_shard == assign[p.vertices[0] as usize]));
        let total: usize = idx.iter().map(|i| i.tree.len()).sum();
        assert_eq!(total, cat.len());
        assert_eq!(cat.len_totals.iter().sum::<u64>(), cat.len() as u64);
    }

    #[test]
    fn orientation_binding() {
        let g = LabeledGraph::from_edges(vec![0, 1, 0], 2, &[(0, 1), (1, 2)]).unwrap();
        let data = enumerate_paths(&g, 2).into_iter().find(|p| p.len() == 2).unwrap();
        let qp = QueryPath {
            vertices: vec![5, 6, 7],
            labels: vec![0, 1, 0],
            degrees: vec![1, 2, 1],
        };
        // Palindromic labels bind both ways.
        assert_eq!(bind_path(&qp, &data, &g).len(), 2);
        let strict = QueryPath {
            degrees: vec![2, 2, 1],
            ..qp
        };
        assert!(bind_path(&strict, &data, &g).is_empty());
    }

    #[test]
    fn matches_oracle_on_small_graphs() {
        for seed in 0..6 {
            let (g, cat, idx) = setup(seed);
            for qs in 0..8 {
                let Ok(q) = sample_query_graph(&g, 3 + (qs as usize % 4), 1.0, 3.0, seed * 100 + qs) else {
                    continue;
                };
                let plan = extract_cover(&q);
                let (got, stats, _) = execute_plan(&g, &q, &plan, &mut |_, qp| fetch_from_indexes(qp, &idx, &cat, &g));
                let want = brute_force_match(&g, &q).unwrap();
                assert_eq!(got, want, "seed {seed} query {qs}");
                assert_eq!(stats.index.candidates_in - stats.index.pruned, stats.index.candidates_out);
                assert_eq!(stats.verify.pruned, 0);
            }
        }
    }

    #[test]
    fn absent_label_gives_nothing() {
        let (g, cat, idx) = setup(2);
        let q = LabeledGraph::from_edges(vec![9, 0, 1], 10, &[(0, 1), (1, 2)]).unwrap();
        let plan = extract_cover(&q);
        let (got, stats, _) = execute_plan(&g, &q, &plan, &mut |_, qp| fetch_from_indexes(qp, &idx, &cat, &g));
        assert!(got.is_empty());
        assert_eq!(stats.index.candidates_out, 0);
    }
}
