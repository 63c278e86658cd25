use serde::{Deserialize, Serialize};

use crate::ShardId;

pub const W_CPU: f64 = 0.4;
pub const W_COMM: f64 = 0.3;
pub const W_MEM: f64 = 0.3;
/// Balancing triggers when the machine-load standard deviation reaches this.
pub const SIGMA_TRIGGER: f64 = 0.30;

/// One shard's load as reported by its worker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSample {
    pub shard: ShardId,
    pub u_cpu: f64,
    /// Cross-shard queries per second touching the shard.
    pub comm: f64,
    pub mem_ratio: f64,
    pub time_us: u64,
}

impl LoadSample {
    /// This shard's contribution to its machine's load.
    pub fn load(&self, comm_max: f64) -> f64 {
        let comm = if comm_max > 0.0 { self.comm / comm_max } else { 0.0 };
        W_CPU * self.u_cpu + W_COMM * comm + W_MEM * self.mem_ratio
    }
}

/// `0.4 Σu_cpu + 0.3 Σ(comm/comm_max) + 0.3 Σmem_ratio`; the comm term is 0
/// when `comm_max` is 0.
pub fn machine_load(samples: &[LoadSample], comm_max: f64) -> f64 {
    samples.iter().map(|s| s.load(comm_max)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLoadView {
    pub loads: Vec<f64>,
    pub mean: f64,
    pub sigma: f64,
    pub comm_max: f64,
}

impl ClusterLoadView {
    pub fn new(loads: Vec<f64>, comm_max: f64) -> Self {
        let (mean, sigma, _) = cluster_stats(&loads);
        Self {
            loads,
            mean,
            sigma,
            comm_max,
        }
    }

    pub fn triggered(&self) -> bool {
        self.sigma >= SIGMA_TRIGGER
    }
}

/// `(mean, population σ, σ ≥ 0.30)`.
pub fn cluster_stats(loads: &[f64]) -> (f64, f64, bool) {
    if loads.is_empty() {
        return (0.0, 0.0, false);
    }
    let n = loads.len() as f64;
    let mean = loads.iter().sum::<f64>() / n;
    let var = loads.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    (mean, sigma, sigma >= SIGMA_TRIGGER)
}
