//! Hardware-aware shard placement and training-task allocation.

use serde::{Deserialize, Serialize};

use super::{PartitionError, Shard, StaticCorrelation};
use crate::{MachineId, ShardId};

/// Allowed spread of per-machine deviation from target, as a fraction of total bytes.
pub const MAX_DEPLOY_SPREAD: f64 = 0.10;
/// Mean label similarity above which a shard is considered a good neighbour.
pub const W_LABEL_AFFINITY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub id: MachineId,
    pub cores: u32,
    pub freq_ghz: f64,
    pub mem_bandwidth_gbs: f64,
    pub gpu_tflops: f64,
    pub gpu_vram_gb: f64,
    pub mem_capacity_bytes: u64,
}

impl MachineSpec {
    pub fn cpu_product(&self) -> f64 {
        self.cores as f64 * self.freq_ghz * self.mem_bandwidth_gbs
    }

    pub fn gpu_product(&self) -> f64 {
        self.gpu_tflops * self.gpu_vram_gb
    }

    /// A uniform desk-scale machine.
    pub fn uniform(id: MachineId) -> Self {
        Self {
            id,
            cores: 16,
            freq_ghz: 3.0,
            mem_bandwidth_gbs: 50.0,
            gpu_tflops: 80.0,
            gpu_vram_gb: 24.0,
            mem_capacity_bytes: 1 << 34,
        }
    }
}

/// `(cpu_perf, gpu_perf)`, each normalized so the strongest machine scores 1.
pub fn perf_scores(specs: &[MachineSpec]) -> (Vec<f64>, Vec<f64>) {
    let norm = |xs: Vec<f64>| {
        let max = xs.iter().copied().fold(0.0, f64::max);
        xs.into_iter().map(|x| if max > 0.0 { x / max } else { 1.0 }).collect()
    };
    (
        norm(specs.iter().map(MachineSpec::cpu_product).collect()),
        norm(specs.iter().map(MachineSpec::gpu_product).collect()),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    /// Machine of each shard, indexed by shard id.
    pub placement: Vec<MachineId>,
    /// Bytes allocated per machine.
    pub allocated: Vec<u64>,
    /// Target bytes per machine, `w_k * TotalSize`.
    pub targets: Vec<f64>,
}

impl DeploymentPlan {
    pub fn total(&self) -> u64 {
        self.allocated.iter().sum()
    }

    pub fn shards_on(&self, machine: MachineId) -> Vec<ShardId> {
        (0..self.placement.len() as ShardId)
            .filter(|&s| self.placement[s as usize] == machine)
            .collect()
    }

    /// `(max - min)` of per-machine deviation from target, over total size.
    /// Equals the raw allocation spread when all targets are equal.
    pub fn spread(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let dev: Vec<f64> = self
            .allocated
            .iter()
            .zip(&self.targets)
            .map(|(&a, &t)| a as f64 - t)
            .collect();
        let max = dev.iter().copied().fold(f64::MIN, f64::max);
        let min = dev.iter().copied().fold(f64::MAX, f64::min);
        (max - min) / total as f64
    }
}

/// Greedy placement: the machine furthest below its byte target picks next.
/// An empty machine picks the shard least similar to everything already
/// placed; a non-empty one prefers shards whose mean label similarity with
/// its residents reaches [`W_LABEL_AFFINITY`], else the largest that fits.
pub fn allocate_shards(
    shards: &[Shard],
    specs: &[MachineSpec],
    corr: &StaticCorrelation,
) -> Result<DeploymentPlan, PartitionError> {
    if specs.is_empty() {
        return Err(PartitionError::Config("no machines".into()));
    }
    let needed: u64 = shards.iter().map(|s| s.size_bytes).sum();
    let capacity: u64 = specs.iter().map(|s| s.mem_capacity_bytes).sum();
    if needed > capacity {
        return Err(PartitionError::Capacity { needed, capacity });
    }
    let (cpu, _) = perf_scores(specs);
    let wsum: f64 = cpu.iter().sum();
    let targets: Vec<f64> = cpu.iter().map(|c| c / wsum * needed as f64).collect();

    let affine = greedy(shards, specs, &targets, Some(corr))?;
    if affine.spread() <= MAX_DEPLOY_SPREAD {
        return Ok(affine);
    }
    log::debug!("affinity placement spread {:.4}, retrying size-only", affine.spread());
    let plain = greedy(shards, specs, &targets, None)?;
    if plain.spread() <= MAX_DEPLOY_SPREAD {
        return Ok(plain);
    }
    Err(PartitionError::DeploySpread {
        achieved: affine.spread().min(plain.spread()),
        limit: MAX_DEPLOY_SPREAD,
    })
}

fn greedy(
    shards: &[Shard],
    specs: &[MachineSpec],
    targets: &[f64],
    corr: Option<&StaticCorrelation>,
) -> Result<DeploymentPlan, PartitionError> {
    let n = specs.len();
    let mut placement = vec![MachineId::MAX; shards.len()];
    let mut allocated = vec![0u64; n];
    let mut residents: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut placed: Vec<usize> = Vec::new();
    let mut unplaced: Vec<usize> = (0..shards.len()).collect();
    // Larger shards first so ties resolve toward size.
    unplaced.sort_by(|&a, &b| shards[b].size_bytes.cmp(&shards[a].size_bytes).then(a.cmp(&b)));

    while !unplaced.is_empty() {
        let mut machines: Vec<usize> = (0..n).collect();
        machines.sort_by(|&a, &b| {
            let da = targets[a] - allocated[a] as f64;
            let db = targets[b] - allocated[b] as f64;
            db.total_cmp(&da).then(a.cmp(&b))
        });
        let mut chosen = None;
        for k in machines {
            let fits: Vec<usize> = unplaced
                .iter()
                .copied()
                .filter(|&s| allocated[k] + shards[s].size_bytes <= specs[k].mem_capacity_bytes)
                .collect();
            if fits.is_empty() {
                continue;
            }
            let pick = match corr {
                None => fits[0],
                Some(c) if residents[k].is_empty() => {
                    let mean_to_placed = |s: usize| mean_w(c, s, &placed);
                    *fits
                        .iter()
                        .min_by(|&&a, &&b| mean_to_placed(a).total_cmp(&mean_to_placed(b)))
                        .unwrap()
                }
                Some(c) => best_affine(c, &fits, &residents[k]).unwrap_or(fits[0]),
            };
            chosen = Some((k, pick));
            break;
        }
        let Some((k, s)) = chosen else {
            return Err(PartitionError::Capacity {
                needed: unplaced.iter().map(|&s| shards[s].size_bytes).sum(),
                capacity: specs
                    .iter()
                    .zip(&allocated)
                    .map(|(sp, &a)| sp.mem_capacity_bytes - a)
                    .sum(),
            });
        };
        placement[shards[s].id as usize] = k as MachineId;
        allocated[k] += shards[s].size_bytes;
        residents[k].push(s);
        placed.push(s);
        unplaced.retain(|&x| x != s);
    }
    Ok(DeploymentPlan {
        placement,
        allocated,
        targets: targets.to_vec(),
    })
}

/// Highest mean similarity among `fits`; ties go to the earlier (larger) shard.
fn best_affine(c: &StaticCorrelation, fits: &[usize], residents: &[usize]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &s in fits {
        let w = mean_w(c, s, residents);
        if w >= W_LABEL_AFFINITY && best.is_none_or(|(bw, _)| w > bw) {
            best = Some((w, s));
        }
    }
    best.map(|(_, s)| s)
}

fn mean_w(c: &StaticCorrelation, s: usize, others: &[usize]) -> f64 {
    if others.is_empty() {
        return 0.0;
    }
    others.iter().map(|&o| c.w_label(s, o)).sum::<f64>() / others.len() as f64
}

/// Training shards per machine: `ceil(gpu_w_k * m)`, with the ceiling surplus
/// taken back one at a time from the weakest machines, later ids first.
pub fn assign_training_tasks(m: usize, gpu_perf: &[f64]) -> Vec<usize> {
    let total: f64 = gpu_perf.iter().sum();
    if gpu_perf.is_empty() || total <= 0.0 {
        return vec![0; gpu_perf.len()];
    }
    let mut counts: Vec<usize> = gpu_perf
        .iter()
        .map(|g| (g / total * m as f64 - 1e-9).ceil().max(0.0) as usize)
        .collect();
    let mut order: Vec<usize> = (0..gpu_perf.len()).collect();
    order.sort_by(|&a, &b| gpu_perf[a].total_cmp(&gpu_perf[b]).then(b.cmp(&a)));
    let mut surplus = counts.iter().sum::<usize>().saturating_sub(m);
    while surplus > 0 {
        let before = surplus;
        for &k in &order {
            if surplus == 0 {
                break;
            }
            if counts[k] > 0 {
                counts[k] -= 1;
                surplus -= 1;
            }
        }
        if surplus == before {
            break;
        }
    }
    counts
}
