use super::{LabeledGraph, PathInstance};
use crate::VertexId;

/// Longest path (in edges) the indexes handle.
pub const MAX_PATH_LEN: usize = 5;

/// All simple paths of 1..=`max_len` edges, each reported once in canonical
/// orientation (first vertex smaller than the last). Output order: by first
/// vertex, then depth-first over sorted neighbours.
///
/// `home_shard` is left at 0; the partitioner assigns it.
pub fn enumerate_paths(g: &LabeledGraph, max_len: usize) -> Vec<PathInstance> {
    assert!(
        (1..=MAX_PATH_LEN).contains(&max_len),
        "max_len must be in 1..={MAX_PATH_LEN}"
    );
    let degrees = g.degrees();
    let mut out = Vec::new();
    let mut stack = Vec::with_capacity(max_len + 1);
    for start in 0..g.vertex_count() as VertexId {
        stack.clear();
        stack.push(start);
        extend(g, &degrees, max_len, &mut stack, &mut out);
    }
    out
}

fn extend(
    g: &LabeledGraph,
    degrees: &[u32],
    max_len: usize,
    stack: &mut Vec<VertexId>,
    out: &mut Vec<PathInstance>,
) {
    let last = *stack.last().unwrap();
    for &next in g.neighbors(last) {
        if stack.contains(&next) {
            continue;
        }
        stack.push(next);
        if stack[0] < next {
            out.push(PathInstance {
                vertices: stack.clone(),
                degrees: stack.iter().map(|&v| degrees[v as usize]).collect(),
                home_shard: 0,
            });
        }
        if stack.len() <= max_len {
            extend(g, degrees, max_len, stack, out);
        }
        stack.pop();
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::graph::generate_nws;

    fn count_by_len(paths: &[PathInstance], max_len: usize) -> Vec<usize> {
        (1..=max_len)
            .map(|l| paths.iter().filter(|p| p.len() == l).count())
            .collect()
    }

    #[test]
    fn triangle_counts() {
        let g = LabeledGraph::from_edges(vec![0; 3], 1, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(enumerate_paths(&g, 1).len(), 3);
        assert_eq!(enumerate_paths(&g, 2).len(), 6);
    }

    #[test]
    fn path_graph_counts() {
        let g = LabeledGraph::from_edges(vec![0; 4], 1, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let paths = enumerate_paths(&g, 3);
        assert_eq!(count_by_len(&paths, 3), vec![3, 2, 1]);
    }

    #[test]
    fn empty_graph_has_no_paths() {
        let g = LabeledGraph::from_edges(vec![], 1, &[]).unwrap();
        assert!(enumerate_paths(&g, 3).is_empty());
    }

    #[test]
    fn no_duplicates_or_reversals() {
        let g = generate_nws(40, 4, 0.2, 3, 5).unwrap();
        let paths = enumerate_paths(&g, 4);
        let mut seen = HashSet::new();
        for p in &paths {
            assert!(p.vertices[0] < *p.vertices.last().unwrap());
            let mut rev = p.vertices.clone();
            rev.reverse();
            assert!(!seen.contains(&rev));
            assert!(seen.insert(p.vertices.clone()));
            for w in p.vertices.windows(2) {
                assert!(g.has_edge(w[0], w[1]));
            }
            let distinct: HashSet<_> = p.vertices.iter().collect();
            assert_eq!(distinct.len(), p.vertices.len());
        }
    }

    #[test]
    fn ring_lattice_counts_match_closed_form() {
        // A cycle of n vertices has exactly n simple paths of every length < n.
        let g = generate_nws(12, 2, 0.0, 1, 0).unwrap();
        let paths = enumerate_paths(&g, 5);
        assert_eq!(count_by_len(&paths, 5), vec![12; 5]);
    }
}
