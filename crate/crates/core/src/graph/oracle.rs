//! Exhaustive matcher used as ground truth.

use std::collections::{BTreeSet, VecDeque};

use super::{GraphError, LabeledGraph, MatchMapping, QueryGraph};
use crate::VertexId;

pub const ORACLE_MAX_QUERY: usize = 16;

/// All injective, label- and edge-preserving maps from `q` into `g`
/// (non-induced semantics). Plain backtracking; the only pruning is the
/// label check and `deg_g >= deg_q`.
pub fn brute_force_match(
    g: &LabeledGraph,
    q: &QueryGraph,
) -> Result<BTreeSet<MatchMapping>, GraphError> {
    let nq = q.vertex_count();
    if nq > ORACLE_MAX_QUERY {
        return Err(GraphError::QueryTooLarge(nq));
    }
    let order = bfs_order(q);
    let candidates: Vec<Vec<VertexId>> = (0..nq as VertexId)
        .map(|u| {
            (0..g.vertex_count() as VertexId)
                .filter(|&v| g.label(v) == q.label(u) && g.degree(v) >= q.degree(u))
                .collect()
        })
        .collect();
    let mut state = Search {
        g,
        q,
        order: &order,
        candidates: &candidates,
        mapping: vec![VertexId::MAX; nq],
        used: vec![false; g.vertex_count()],
        out: BTreeSet::new(),
    };
    state.descend(0);
    Ok(state.out)
}

fn bfs_order(q: &LabeledGraph) -> Vec<VertexId> {
    let n = q.vertex_count();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for root in 0..n as VertexId {
        if seen[root as usize] {
            continue;
        }
        seen[root as usize] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &w in q.neighbors(u) {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order
}

struct Search<'a> {
    g: &'a LabeledGraph,
    q: &'a LabeledGraph,
    order: &'a [VertexId],
    candidates: &'a [Vec<VertexId>],
    mapping: Vec<VertexId>,
    used: Vec<bool>,
    out: BTreeSet<MatchMapping>,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize) {
        if depth == self.order.len() {
            self.out.insert(MatchMapping(self.mapping.clone()));
            return;
        }
        let u = self.order[depth];
        for &v in &self.candidates[u as usize] {
            if self.used[v as usize] {
                continue;
            }
            let consistent = self.q.neighbors(u).iter().all(|&w| {
                let img = self.mapping[w as usize];
                img == VertexId::MAX || self.g.has_edge(v, img)
            });
            if !consistent {
                continue;
            }
            self.mapping[u as usize] = v;
            self.used[v as usize] = true;
            self.descend(depth + 1);
            self.used[v as usize] = false;
            self.mapping[u as usize] = VertexId::MAX;
        }
    }
}

/// Independent re-check of both matching conditions plus injectivity.
pub fn is_valid_match(g: &LabeledGraph, q: &LabeledGraph, m: &MatchMapping) -> bool {
    if m.0.len() != q.vertex_count() {
        return false;
    }
    let mut images = m.0.clone();
    images.sort_unstable();
    if images.windows(2).any(|w| w[0] == w[1]) {
        return false;
    }
    if m.0.iter().any(|&v| v as usize >= g.vertex_count()) {
        return false;
    }
    let labels_ok = m.pairs().all(|(u, v)| q.label(u) == g.label(v));
    labels_ok && q.edges().all(|(a, b)| g.has_edge(m.image(a), m.image(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_nws;

    fn complete(n: u32, labels: Vec<u32>, label_count: u32) -> LabeledGraph {
        let edges: Vec<_> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        LabeledGraph::from_edges(labels, label_count, &edges).unwrap()
    }

    #[test]
    fn triangle_automorphisms() {
        let g = complete(3, vec![0; 3], 1);
        let q = QueryGraph::new(g.clone()).unwrap();
        assert_eq!(brute_force_match(&g, &q).unwrap().len(), 6);
    }

    #[test]
    fn absent_label_gives_nothing() {
        let g = complete(3, vec![0; 3], 2);
        let q = QueryGraph::new(LabeledGraph::from_edges(vec![0, 1], 2, &[(0, 1)]).unwrap())
            .unwrap();
        assert!(brute_force_match(&g, &q).unwrap().is_empty());
    }

    /// Expected count comes from enumerating all 4! injective maps.
    #[test]
    fn c4_in_k4_matches_enumeration() {
        let g = complete(4, vec![0; 4], 1);
        let c4 = LabeledGraph::from_edges(vec![0; 4], 1, &[(0, 1), (1, 2), (2, 3), (3, 0)])
            .unwrap();
        let q = QueryGraph::new(c4.clone()).unwrap();
        let mut expected = 0;
        let mut perm = [0u32, 1, 2, 3];
        permutations(&mut perm, 0, &mut |p| {
            if c4.edges().all(|(a, b)| g.has_edge(p[a as usize], p[b as usize])) {
                expected += 1;
            }
        });
        let found = brute_force_match(&g, &q).unwrap();
        assert_eq!(found.len(), expected);
        assert_eq!(expected, 24);

        // Into itself only the 8 dihedral automorphisms survive.
        let found = brute_force_match(&c4, &q).unwrap();
        assert_eq!(found.len(), 8);
    }

    fn permutations(a: &mut [u32; 4], k: usize, f: &mut impl FnMut(&[u32; 4])) {
        if k == a.len() {
            f(a);
            return;
        }
        for i in k..a.len() {
            a.swap(k, i);
            permutations(a, k + 1, f);
            a.swap(k, i);
        }
    }

    #[test]
    fn refuses_oversized_query() {
        let big = complete(17, vec![0; 17], 1);
        // QueryGraph::new rejects > 16 itself, so construct through the tuple field.
        let q = QueryGraph(big.clone());
        assert!(matches!(
            brute_force_match(&big, &q),
            Err(GraphError::QueryTooLarge(17))
        ));
    }

    #[test]
    fn every_mapping_rechecks() {
        let g = generate_nws(60, 4, 0.1, 3, 2).unwrap();
        let q = crate::graph::sample_query_graph(&g, 4, 1.0, 3.0, 5).unwrap();
        let found = brute_force_match(&g, &q).unwrap();
        assert!(!found.is_empty());
        assert!(found.iter().all(|m| is_valid_match(&g, &q, m)));
    }

    #[test]
    fn invariant_under_vertex_relabeling() {
        let g = generate_nws(40, 4, 0.15, 2, 9).unwrap();
        let q = crate::graph::sample_query_graph(&g, 4, 1.0, 3.0, 1).unwrap();
        let n = g.vertex_count() as u32;
        let perm: Vec<u32> = (0..n).map(|v| (v * 7 + 3) % n).collect();
        let h = g.permuted(&perm);
        let base = brute_force_match(&g, &q).unwrap();
        let moved = brute_force_match(&h, &q).unwrap();
        let mapped: BTreeSet<MatchMapping> = base
            .iter()
            .map(|m| MatchMapping(m.0.iter().map(|&v| perm[v as usize]).collect()))
            .collect();
        assert_eq!(mapped, moved);
    }
}
