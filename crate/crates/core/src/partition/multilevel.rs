//! Multilevel k-way partitioning: heavy-edge matching coarsening, greedy
//! graph growing on the coarsest graph, boundary refinement while
//! uncoarsening, then exact balancing to integer size bounds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{shards_from_assignment, PartitionError, Shard};
use crate::graph::LabeledGraph;
use crate::ShardId;

pub const DEFAULT_MAX_SPREAD: f64 = 0.15;

const INITIAL_TRIES: usize = 4;
const REFINE_PASSES: usize = 8;

/// Integer shard-size bounds `(lo, hi)` with `(hi - lo) / mean <= max_spread`
/// that admit a partition of `n` vertices into `m` shards.
pub fn size_bounds(n: usize, m: usize, max_spread: f64) -> Result<(usize, usize), PartitionError> {
    if m == 0 || m > n {
        return Err(PartitionError::Config(format!(
            "need 1 <= m <= |V|, got m={m}, |V|={n}"
        )));
    }
    if max_spread.is_nan() || max_spread < 0.0 {
        return Err(PartitionError::Config(format!("max_spread {max_spread} is negative")));
    }
    let mean = n as f64 / m as f64;
    let slack = (max_spread * mean + 1e-9).floor() as usize;
    let base = n / m;
    if n.is_multiple_of(m) {
        let lo = (base - slack / 2).max(1);
        return Ok((lo, lo + slack));
    }
    if slack < 1 {
        return Err(PartitionError::Spread {
            requested: max_spread,
            achievable: 1.0 / mean,
            n,
            m,
        });
    }
    let lo = (base - (slack - 1) / 2).max(1);
    Ok((lo, lo + slack))
}

/// Number of edges whose endpoints land in different shards.
pub fn edge_cut(g: &LabeledGraph, assign: &[ShardId]) -> usize {
    g.edges()
        .filter(|&(u, v)| assign[u as usize] != assign[v as usize])
        .count()
}

/// Balanced uniform-random assignment: a shuffled vertex order dealt round-robin.
pub fn random_assignment(n: usize, m: usize, seed: u64) -> Vec<ShardId> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut a = vec![0; n];
    for (i, v) in order.into_iter().enumerate() {
        a[v] = (i % m) as ShardId;
    }
    a
}

pub fn partition_graph(
    g: &LabeledGraph,
    m: usize,
    max_spread: f64,
    seed: u64,
) -> Result<Vec<Shard>, PartitionError> {
    let assign = partition_assignment(g, m, max_spread, seed)?;
    Ok(shards_from_assignment(g, &assign, m))
}

/// Vertex → shard map minimizing edge cut under the size bounds.
pub fn partition_assignment(
    g: &LabeledGraph,
    m: usize,
    max_spread: f64,
    seed: u64,
) -> Result<Vec<ShardId>, PartitionError> {
    let n = g.vertex_count();
    let (lo, hi) = size_bounds(n, m, max_spread)?;
    if m == 1 {
        return Ok(vec![0; n]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let finest = WGraph::from_graph(g);
    let cap = (n / m / 3).max(1);
    let coarsen_to = (4 * m).max(40);
    let mut levels: Vec<(WGraph, Vec<usize>)> = Vec::new();
    let mut current = finest.clone();
    while current.len() > coarsen_to && levels.len() < 30 {
        let (coarse, map) = current.coarsen(cap, &mut rng);
        if coarse.len() as f64 > 0.9 * current.len() as f64 {
            break;
        }
        levels.push((std::mem::replace(&mut current, coarse), map));
    }

    let slack_w = current.vw.iter().copied().max().unwrap_or(1);
    let (clo, chi) = (lo.saturating_sub(slack_w), hi + slack_w);
    let mut best: Option<(usize, Vec<usize>)> = None;
    for _ in 0..INITIAL_TRIES {
        let mut parts = current.grow(m, &mut rng);
        current.refine(&mut parts, m, clo, chi);
        let cut = current.cut(&parts);
        if best.as_ref().is_none_or(|(c, _)| cut < *c) {
            best = Some((cut, parts));
        }
    }
    let mut parts = best.expect("at least one try").1;

    while let Some((fine, map)) = levels.pop() {
        parts = map.iter().map(|&c| parts[c]).collect();
        current = fine;
        let slack_w = current.vw.iter().copied().max().unwrap_or(1);
        current.refine(&mut parts, m, lo.saturating_sub(slack_w - 1), hi + slack_w - 1);
    }

    current.balance(&mut parts, m, lo, hi);
    for _ in 0..REFINE_PASSES {
        let before = current.cut(&parts);
        current.refine(&mut parts, m, lo, hi);
        current.swap_pass(&mut parts, m);
        if current.cut(&parts) >= before {
            break;
        }
    }
    Ok(parts.into_iter().map(|p| p as ShardId).collect())
}

/// Vertex- and edge-weighted graph used during coarsening.
#[derive(Debug, Clone)]
struct WGraph {
    vw: Vec<usize>,
    /// Sorted `(neighbor, edge weight)` lists.
    adj: Vec<Vec<(usize, usize)>>,
}

impl WGraph {
    fn from_graph(g: &LabeledGraph) -> Self {
        Self {
            vw: vec![1; g.vertex_count()],
            adj: (0..g.vertex_count() as u32)
                .map(|v| g.neighbors(v).iter().map(|&w| (w as usize, 1)).collect())
                .collect(),
        }
    }

    fn len(&self) -> usize {
        self.vw.len()
    }

    fn cut(&self, parts: &[usize]) -> usize {
        let twice: usize = (0..self.len())
            .flat_map(|v| self.adj[v].iter().map(move |&(u, w)| (v, u, w)))
            .filter(|&(v, u, _)| parts[v] != parts[u])
            .map(|(_, _, w)| w)
            .sum();
        twice / 2
    }

    /// Heavy-edge matching in random visit order; merged weight stays `<= cap`.
    fn coarsen(&self, cap: usize, rng: &mut ChaCha8Rng) -> (WGraph, Vec<usize>) {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut map = vec![usize::MAX; n];
        let mut next = 0;
        for &v in &order {
            if map[v] != usize::MAX {
                continue;
            }
            let mate = self.adj[v]
                .iter()
                .filter(|&&(u, _)| map[u] == usize::MAX && self.vw[u] + self.vw[v] <= cap)
                .max_by(|a, b| a.1.cmp(&b.1).then(self.vw[b.0].cmp(&self.vw[a.0])).then(b.0.cmp(&a.0)))
                .map(|&(u, _)| u);
            map[v] = next;
            if let Some(u) = mate {
                map[u] = next;
            }
            next += 1;
        }
        let mut vw = vec![0; next];
        let mut raw: Vec<Vec<(usize, usize)>> = vec![Vec::new(); next];
        for v in 0..n {
            let c = map[v];
            vw[c] += self.vw[v];
            for &(u, w) in &self.adj[v] {
                if map[u] != c {
                    raw[c].push((map[u], w));
                }
            }
        }
        let adj = raw
            .into_iter()
            .map(|mut list| {
                list.sort_unstable();
                let mut merged: Vec<(usize, usize)> = Vec::with_capacity(list.len());
                for (u, w) in list {
                    match merged.last_mut() {
                        Some(last) if last.0 == u => last.1 += w,
                        _ => merged.push((u, w)),
                    }
                }
                merged
            })
            .collect();
        (WGraph { vw, adj }, map)
    }

    /// Greedy graph growing: each part grows from a random unassigned seed,
    /// always absorbing the frontier vertex most connected to it.
    fn grow(&self, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut parts = vec![usize::MAX; n];
        let mut unassigned = n;
        let mut remaining_w: usize = self.vw.iter().sum();
        let mut cursor = 0;
        for k in 0..m {
            if k == m - 1 {
                for p in parts.iter_mut().filter(|p| **p == usize::MAX) {
                    *p = k;
                }
                break;
            }
            let target = remaining_w as f64 / (m - k) as f64;
            let mut w = 0usize;
            let mut conn = vec![0usize; n];
            let mut frontier: Vec<usize> = Vec::new();
            loop {
                if unassigned < m - k {
                    break;
                }
                frontier.retain(|&v| parts[v] == usize::MAX);
                let pick = frontier
                    .iter()
                    .copied()
                    .max_by(|&a, &b| conn[a].cmp(&conn[b]).then(b.cmp(&a)))
                    .or_else(|| {
                        while cursor < n && parts[order[cursor]] != usize::MAX {
                            cursor += 1;
                        }
                        order.get(cursor).copied()
                    });
                let Some(v) = pick else { break };
                let after = (w + self.vw[v]) as f64;
                if w > 0 && after > target && after - target > target - w as f64 {
                    break;
                }
                parts[v] = k;
                unassigned -= 1;
                w += self.vw[v];
                for &(u, ew) in &self.adj[v] {
                    if parts[u] == usize::MAX {
                        if conn[u] == 0 {
                            frontier.push(u);
                        }
                        conn[u] += ew;
                    }
                }
                if w as f64 >= target {
                    break;
                }
            }
            remaining_w -= w;
        }
        parts
    }

    fn part_weights(&self, parts: &[usize], m: usize) -> Vec<usize> {
        let mut pw = vec![0; m];
        for (v, &p) in parts.iter().enumerate() {
            pw[p] += self.vw[v];
        }
        pw
    }

    /// `(part, connection weight)` pairs for `v`, sorted by part.
    fn connections(&self, v: usize, parts: &[usize]) -> Vec<(usize, usize)> {
        let mut c: Vec<(usize, usize)> = Vec::with_capacity(self.adj[v].len());
        for &(u, w) in &self.adj[v] {
            let p = parts[u];
            match c.iter_mut().find(|e| e.0 == p) {
                Some(e) => e.1 += w,
                None => c.push((p, w)),
            }
        }
        c.sort_unstable();
        c
    }

    /// Greedy boundary moves with positive gain (or zero gain that improves
    /// balance) that keep part weights within `[lo, hi]`.
    fn refine(&self, parts: &mut [usize], m: usize, lo: usize, hi: usize) {
        let mut pw = self.part_weights(parts, m);
        for _ in 0..REFINE_PASSES {
            let mut moved = false;
            for v in 0..self.len() {
                let a = parts[v];
                let conn = self.connections(v, parts);
                if conn.iter().all(|&(p, _)| p == a) {
                    continue;
                }
                let internal = conn.iter().find(|e| e.0 == a).map_or(0, |e| e.1) as i64;
                let wv = self.vw[v];
                let best = conn
                    .iter()
                    .filter(|&&(b, _)| b != a && pw[b] + wv <= hi && pw[a] >= lo + wv)
                    .map(|&(b, c)| (c as i64 - internal, b))
                    .max_by(|x, y| x.0.cmp(&y.0).then(pw[y.1].cmp(&pw[x.1])).then(y.1.cmp(&x.1)));
                let Some((gain, b)) = best else { continue };
                if gain > 0 || (gain == 0 && pw[a] > pw[b] + wv) {
                    parts[v] = b;
                    pw[a] -= wv;
                    pw[b] += wv;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }

    /// Exchanges pairs of unit-weight vertices across two parts when the
    /// exchange lowers the cut; sizes are untouched.
    fn swap_pass(&self, parts: &mut [usize], m: usize) {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (v, &p) in parts.iter().enumerate() {
            members[p].push(v);
        }
        for v in 0..self.len() {
            let a = parts[v];
            let conn_v = self.connections(v, parts);
            let int_v = conn_v.iter().find(|e| e.0 == a).map_or(0, |e| e.1) as i64;
            let mut best: Option<(i64, usize)> = None;
            for &(b, cb) in conn_v.iter().filter(|e| e.0 != a) {
                let gain_v = cb as i64 - int_v;
                for &u in &members[b] {
                    if self.vw[u] != self.vw[v] {
                        continue;
                    }
                    let conn_u = self.connections(u, parts);
                    let to_a = conn_u.iter().find(|e| e.0 == a).map_or(0, |e| e.1) as i64;
                    if to_a == 0 {
                        continue;
                    }
                    let int_u = conn_u.iter().find(|e| e.0 == b).map_or(0, |e| e.1) as i64;
                    let shared = self.adj[v].iter().find(|e| e.0 == u).map_or(0, |e| e.1) as i64;
                    let total = gain_v + (to_a - int_u) - 2 * shared;
                    if total > 0 && best.is_none_or(|(t, _)| total > t) {
                        best = Some((total, u));
                    }
                }
            }
            if let Some((_, u)) = best {
                let b = parts[u];
                parts[v] = b;
                parts[u] = a;
                members[a].retain(|&x| x != v);
                members[b].retain(|&x| x != u);
                members[a].push(u);
                members[b].push(v);
            }
        }
    }

    /// Moves single vertices until every part weight is within `[lo, hi]`.
    /// Assumes unit vertex weights (only called on the finest graph).
    fn balance(&self, parts: &mut [usize], m: usize, lo: usize, hi: usize) {
        let mut pw = self.part_weights(parts, m);
        loop {
            if let Some(a) = (0..m).find(|&p| pw[p] > hi) {
                // Push one vertex out of `a`, preferring an adjacent part.
                let mut best: Option<(i64, usize, usize)> = None;
                for v in (0..self.len()).filter(|&v| parts[v] == a) {
                    let conn = self.connections(v, parts);
                    let internal = conn.iter().find(|e| e.0 == a).map_or(0, |e| e.1) as i64;
                    for b in 0..m {
                        if b == a || pw[b] >= hi {
                            continue;
                        }
                        let cb = conn.iter().find(|e| e.0 == b).map_or(0, |e| e.1) as i64;
                        let score = (cb - internal) * 4 + if pw[b] < lo { 2 } else { 0 };
                        if best.is_none_or(|(s, _, _)| score > s) {
                            best = Some((score, v, b));
                        }
                    }
                }
                let (_, v, b) = best.expect("some part is below hi when one is above");
                parts[v] = b;
                pw[a] -= 1;
                pw[b] += 1;
            } else if let Some(a) = (0..m).find(|&p| pw[p] < lo) {
                // Pull one vertex into `a` from a part that can spare it.
                let mut best: Option<(i64, usize)> = None;
                for v in 0..self.len() {
                    let c = parts[v];
                    if c == a || pw[c] <= lo {
                        continue;
                    }
                    let conn = self.connections(v, parts);
                    let internal = conn.iter().find(|e| e.0 == c).map_or(0, |e| e.1) as i64;
                    let to_a = conn.iter().find(|e| e.0 == a).map_or(0, |e| e.1) as i64;
                    let score = to_a - internal;
                    if best.is_none_or(|(s, _)| score > s) {
                        best = Some((score, v));
                    }
                }
                let (_, v) = best.expect("some part is above lo when one is below");
                let c = parts[v];
                parts[v] = a;
                pw[c] -= 1;
                pw[a] += 1;
            } else {
                return;
            }
        }
    }
}
