//! Cold start: random-walk pseudo-queries prefill the co-query window before
//! any real traffic arrives.

use std::collections::BTreeSet;

use super::corr::CorrState;
use crate::graph::{sample_query_graph, LabeledGraph, QueryGraph};
use crate::ShardId;

pub const WARMUP_QUERIES: usize = 1000;
pub const WARMUP_AVG_DEG: (f64, f64) = (3.0, 7.0);
/// Query sizes cycled through during warmup.
pub const WARMUP_SIZES: [usize; 5] = [4, 5, 6, 7, 8];
/// Fallback lower bound when a graph is too sparse for the default range.
const FALLBACK_AVG_DEG_LO: f64 = 1.0;

#[derive(Debug, Clone, Default)]
pub struct WarmupTrace {
    pub queries: Vec<QueryGraph>,
    /// Shards each query was routed to.
    pub routed: Vec<BTreeSet<ShardId>>,
    /// Queries sampled with the widened degree range.
    pub relaxed: usize,
}

/// Samples `count` queries, routes each with `route` (no verification) and
/// records the touched shard sets into `state` at `time_us`.
pub fn warmup_pseudo_queries(
    g: &LabeledGraph,
    count: usize,
    seed: u64,
    time_us: u64,
    state: &mut CorrState,
    route: &mut dyn FnMut(&QueryGraph) -> BTreeSet<ShardId>,
) -> WarmupTrace {
    let mut trace = WarmupTrace::default();
    for i in 0..count {
        let n_q = WARMUP_SIZES[i % WARMUP_SIZES.len()].min(g.vertex_count());
        let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
        let q = match sample_query_graph(g, n_q, WARMUP_AVG_DEG.0, WARMUP_AVG_DEG.1, s) {
            Ok(q) => q,
            Err(_) => match sample_query_graph(g, n_q, FALLBACK_AVG_DEG_LO, WARMUP_AVG_DEG.1, s) {
                Ok(q) => {
                    trace.relaxed += 1;
                    q
                }
                Err(e) => {
                    log::debug!("warmup query {i} skipped: {e}");
                    continue;
                }
            },
        };
        let shards = route(&q);
        state.record(time_us, &shards);
        trace.queries.push(q);
        trace.routed.push(shards);
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_nws;

    fn by_vertex_mod(m: u32) -> impl FnMut(&QueryGraph) -> BTreeSet<ShardId> {
        move |q| q.labels().iter().map(|&l| l % m).collect()
    }

    #[test]
    fn zero_queries_leave_window_empty() {
        let g = generate_nws(100, 4, 0.1, 4, 1).unwrap();
        let mut st = CorrState::new(0);
        let t = warmup_pseudo_queries(&g, 0, 1, 0, &mut st, &mut by_vertex_mod(3));
        assert!(t.routed.is_empty());
        assert_eq!(st.window_len(), 0);
    }

    #[test]
    fn deterministic_and_counts_match_trace() {
        let g = generate_nws(300, 6, 0.1, 5, 2).unwrap();
        let run = || {
            let mut st = CorrState::new(0);
            let t = warmup_pseudo_queries(&g, 50, 9, 0, &mut st, &mut by_vertex_mod(4));
            (t, st)
        };
        let (a, sa) = run();
        let (b, _) = run();
        assert_eq!(a.routed, b.routed);
        assert_eq!(a.routed.len(), 50);
        for i in 0..4 {
            for j in (i + 1)..4 {
                let want = a.routed.iter().filter(|s| s.contains(&i) && s.contains(&j)).count();
                assert_eq!(sa.n_co_query(i, j), want as u64);
            }
        }
    }
}
