//! Which shards leave an overloaded machine, and where they go.

use serde::{Deserialize, Serialize};

use super::corr::EPSILON;
use super::load::ClusterLoadView;
use crate::{MachineId, ShardId};

/// A machine above this load is overloaded.
pub const L_THO: f64 = 0.8;
/// Maximum machine capacity in load units.
pub const CAP: f64 = 0.85;
/// Capacity fraction a target must keep free.
pub const RESERVED: f64 = 0.10;
/// Targets must sit at or below `mean - 0.8σ`.
pub const LIGHT_SIGMA: f64 = 0.8;
/// Shards accumulated per transmission batch under non-critical overload.
pub const BATCH_K: usize = 5;
/// Overload at or below this excess is non-critical.
pub const NON_CRITICAL_DELTA: f64 = 0.2;

/// Nearest-rank percentile: element `ceil(q·N)` (1-based) of the sorted sample.
pub fn nearest_rank(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

fn population_sigma(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Percentile used for the per-shard load unit, from the spread of shard loads.
pub fn quantile_for(sigma_load: f64) -> f64 {
    if sigma_load < 0.1 {
        0.75
    } else if sigma_load <= 0.3 {
        0.90
    } else {
        0.95
    }
}

/// `(M, U_quantile)` with `M = max(ceil(ΔL / U), 1)`; an all-idle source
/// (`U = 0`) moves every shard.
pub fn migration_count(delta_l: f64, shard_loads: &[f64]) -> (usize, f64) {
    if shard_loads.is_empty() {
        return (0, 0.0);
    }
    let q = quantile_for(population_sigma(shard_loads));
    let u = nearest_rank(shard_loads, q);
    if u <= 0.0 {
        return (shard_loads.len(), 0.0);
    }
    let m = ((delta_l / u) - 1e-9).ceil().max(1.0) as usize;
    (m, u)
}

/// `(0.5 + 0.5F) · (1 - corr)^(1-F) · 1/(size + ε) · (0.8 + 0.2·prune)`.
pub fn candidate_priority(f: f64, corr_local: f64, size: f64, prune: f64) -> f64 {
    (0.5 + 0.5 * f) * (1.0 - corr_local).powf(1.0 - f) / (size + EPSILON) * (0.8 + 0.2 * prune)
}

/// Target scoring input for one machine.
#[derive(Debug, Clone)]
pub struct TargetCandidate {
    pub machine: MachineId,
    /// Load including migrations already assigned this round.
    pub projected_load: f64,
    pub local: Vec<ShardId>,
}

/// Best light machine for `x`, or `None` when no machine qualifies.
/// Eligibility uses the round's snapshot view; headroom uses projected load.
/// Ties go to the lower projected load, then the lower id.
pub fn select_target(
    x: ShardId,
    view: &ClusterLoadView,
    machines: &[TargetCandidate],
    corr: &dyn Fn(ShardId, ShardId) -> f64,
    w_label: &dyn Fn(ShardId, ShardId) -> f64,
) -> Option<MachineId> {
    let light = view.mean - LIGHT_SIGMA * view.sigma;
    let mut best: Option<(f64, f64, MachineId)> = None;
    for c in machines {
        let snapshot = view.loads[c.machine as usize];
        if snapshot > light + 1e-12 || c.projected_load / CAP + RESERVED >= 1.0 {
            continue;
        }
        let mean = |f: &dyn Fn(ShardId, ShardId) -> f64| {
            if c.local.is_empty() {
                0.0
            } else {
                c.local.iter().map(|&y| f(x, y)).sum::<f64>() / c.local.len() as f64
            }
        };
        let score = mean(corr) * (1.0 - RESERVED - c.projected_load / CAP) * mean(w_label);
        let better = match best {
            None => true,
            Some((s, l, id)) => {
                score > s + 1e-15
                    || ((score - s).abs() <= 1e-15
                        && (c.projected_load < l || (c.projected_load == l && c.machine < id)))
            }
        };
        if better {
            best = Some((score, c.projected_load, c.machine));
        }
    }
    best.map(|(_, _, id)| id)
}

/// One source machine's migration decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationPlan {
    pub source: MachineId,
    pub delta_l: f64,
    pub u_quantile: f64,
    /// Top-M shards with their priorities, descending.
    pub candidates: Vec<(ShardId, f64)>,
    pub moves: Vec<(ShardId, MachineId)>,
    /// Candidates with no eligible target.
    pub deferred: Vec<ShardId>,
    /// Shards transmitted and switched together.
    pub batches: Vec<Vec<ShardId>>,
}

/// Everything a balancing round looks at. Vectors are indexed by shard id or
/// machine id.
pub struct BalanceInputs<'a> {
    pub view: &'a ClusterLoadView,
    pub shard_loads: &'a [f64],
    pub placement: &'a [MachineId],
    pub sizes: &'a [f64],
    pub prune: &'a [f64],
    pub cross_ratio: &'a [f64],
}

/// One balancing round. Sources are machines above [`L_THO`] in descending
/// load; when σ triggers but none exceeds it, the busiest machine sheds
/// `Load - mean`.
pub fn plan_round(
    inp: &BalanceInputs,
    corr: &dyn Fn(ShardId, ShardId) -> f64,
    w_label: &dyn Fn(ShardId, ShardId) -> f64,
) -> Vec<MigrationPlan> {
    let view = inp.view;
    if !view.triggered() {
        return Vec::new();
    }
    let n = view.loads.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| view.loads[b].total_cmp(&view.loads[a]).then(a.cmp(&b)));
    let mut sources: Vec<(usize, f64)> = order
        .iter()
        .filter(|&&k| view.loads[k] > L_THO)
        .map(|&k| (k, view.loads[k] - L_THO))
        .collect();
    if sources.is_empty() {
        let k = order[0];
        sources.push((k, view.loads[k] - view.mean));
    }

    let mut placement = inp.placement.to_vec();
    let mut projected = view.loads.clone();
    let mut plans = Vec::new();
    for (src, delta_l) in sources {
        let local: Vec<ShardId> = (0..placement.len() as ShardId)
            .filter(|&s| placement[s as usize] as usize == src)
            .collect();
        if local.is_empty() {
            continue;
        }
        let loads: Vec<f64> = local.iter().map(|&s| inp.shard_loads[s as usize]).collect();
        let (m, u) = migration_count(delta_l, &loads);
        let f = inp.cross_ratio[src];
        let mut ranked: Vec<(ShardId, f64)> = local
            .iter()
            .map(|&x| {
                let others: Vec<ShardId> = local.iter().copied().filter(|&y| y != x).collect();
                let corr_local = if others.is_empty() {
                    0.0
                } else {
                    others.iter().map(|&y| corr(x, y)).sum::<f64>() / others.len() as f64
                };
                let p = candidate_priority(
                    f,
                    corr_local.clamp(0.0, 1.0),
                    inp.sizes[x as usize],
                    inp.prune[x as usize],
                );
                (x, p)
            })
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(m.min(ranked.len()));

        let mut moves = Vec::new();
        let mut deferred = Vec::new();
        for &(x, _) in &ranked {
            let machines: Vec<TargetCandidate> = (0..n)
                .filter(|&k| k != src)
                .map(|k| TargetCandidate {
                    machine: k as MachineId,
                    projected_load: projected[k],
                    local: (0..placement.len() as ShardId)
                        .filter(|&s| placement[s as usize] as usize == k)
                        .collect(),
                })
                .collect();
            match select_target(x, view, &machines, corr, w_label) {
                Some(t) => {
                    let l = inp.shard_loads[x as usize];
                    projected[t as usize] += l;
                    projected[src] -= l;
                    placement[x as usize] = t;
                    moves.push((x, t));
                }
                None => {
                    log::info!("shard {x}: no eligible target, migration deferred");
                    deferred.push(x);
                }
            }
        }
        let batches = if delta_l <= NON_CRITICAL_DELTA {
            moves.chunks(BATCH_K).map(|c| c.iter().map(|m| m.0).collect()).collect()
        } else {
            moves.iter().map(|m| vec![m.0]).collect()
        };
        plans.push(MigrationPlan {
            source: src as MachineId,
            delta_l,
            u_quantile: u,
            candidates: ranked,
            moves,
            deferred,
            batches,
        });
    }
    plans
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_examples() {
        assert_eq!(migration_count(0.1, &[0.04; 4]).0, 3);
        assert_eq!(migration_count(0.001, &[0.5, 0.2]).0, 1);
        let (m, u) = migration_count(0.05, &[0.02; 20]);
        assert_eq!((m, u), (3, 0.02));
        assert_eq!(migration_count(0.5, &[0.0; 6]), (6, 0.0));
    }

    #[test]
    fn nearest_rank_percentiles() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(nearest_rank(&xs, 0.75), 15.0);
        assert_eq!(nearest_rank(&xs, 0.90), 18.0);
        assert_eq!(nearest_rank(&xs, 0.95), 19.0);
        assert_eq!(quantile_for(0.05), 0.75);
        assert_eq!(quantile_for(0.3), 0.90);
        assert_eq!(quantile_for(0.31), 0.95);
    }

    #[test]
    fn priority_examples() {
        let p = candidate_priority(0.0, 0.5, 1.0, 0.5);
        assert!((p - 0.5 * 0.5 / (1.0 + EPSILON) * 0.9).abs() < 1e-12);
        let a = candidate_priority(1.0, 0.9, 2.0, 0.3);
        assert!((a - 1.0 / (2.0 + EPSILON) * 0.86).abs() < 1e-12);
        assert!(candidate_priority(0.3, 0.2, 1.0, 0.4) > candidate_priority(0.3, 0.2, 2.0, 0.4));
    }

    fn view(loads: Vec<f64>) -> ClusterLoadView {
        ClusterLoadView::new(loads, 1.0)
    }

    #[test]
    fn target_selection() {
        let one = |_: ShardId, _: ShardId| 1.0;
        let v = view(vec![1.6, 0.1, 0.1, 0.6]);
        let cands = |l1: f64, l2: f64| {
            vec![
                TargetCandidate { machine: 1, projected_load: l1, local: vec![5] },
                TargetCandidate { machine: 2, projected_load: l2, local: vec![6] },
                TargetCandidate { machine: 3, projected_load: 0.6, local: vec![7] },
            ]
        };
        assert_eq!(select_target(0, &v, &cands(0.3, 0.1), &one, &one), Some(2));
        assert_eq!(select_target(0, &v, &cands(0.1, 0.3), &one, &one), Some(1));
        let flat = view(vec![0.9, 0.5, 0.5, 0.5]);
        assert_eq!(select_target(0, &flat, &cands(0.5, 0.5), &one, &one), None);
    }
}
