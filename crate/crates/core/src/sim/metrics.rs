//! Line-delimited metrics records.
//!
//! Each line is one JSON object tagged by `kind`:
//!
//! | kind          | emitted                                   |
//! |---------------|-------------------------------------------|
//! | `run`         | once, first line: seed, toggles, sizes    |
//! | `query`       | per query                                 |
//! | `load`        | per `Comm_max` refresh (every second)     |
//! | `migration`   | per executed migration batch              |
//! | `cache_epoch` | per cache epoch (every 100 queries)       |
//! | `summary`     | once, last line                           |

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::Toggles;
use crate::exec::StageCount;
use crate::ranker::PlanOrder;
use crate::{MachineId, ShardId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub seq: u64,
    pub time_us: u64,
    pub query_seed: u64,
    pub vertices: usize,
    pub edges: usize,
    pub plan_order: PlanOrder,
    pub plan_paths: usize,
    pub cross_shard: bool,
    pub latency_ms: f64,
    pub index: StageCount,
    pub local: StageCount,
    pub verify: StageCount,
    pub intermediate: u64,
    /// Cache source tag → accesses.
    pub sources: BTreeMap<String, u64>,
    /// Central ↔ worker messages for filtering and fetching.
    pub messages: u64,
    pub results: usize,
    /// CRC32 of the sorted result mappings.
    pub digest: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadRecord {
    pub time_us: u64,
    pub loads: Vec<f64>,
    pub mean: f64,
    pub sigma: f64,
    pub comm_max: f64,
    pub triggered: bool,
    /// Shards switched to a new owner at this refresh.
    pub migrated: usize,
    pub deferred: usize,
    pub routing_version: u64,
    /// Cumulative cache hit rate over all accesses so far.
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationRecord {
    pub time_us: u64,
    pub sigma_before: f64,
    /// σ of the same load snapshot regrouped under the new owners.
    pub sigma_after: f64,
    pub moves: Vec<(ShardId, MachineId, MachineId)>,
    pub switched: Vec<ShardId>,
    pub aborted: Vec<ShardId>,
    pub transmissions: u64,
    pub switch_us: u64,
    pub release_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEpochRecord {
    pub time_us: u64,
    pub epoch: u64,
    pub hit_rate: f64,
    pub mean_query_latency_ms: f64,
    pub weights: [f64; 4],
    pub t_up: f64,
    pub model_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub toggles: Toggles,
    pub machines: usize,
    pub shards: usize,
    pub data_paths: usize,
    pub pe_samples: usize,
    pub pe_trees: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub queries: u64,
    pub mean_latency_ms: f64,
    pub hit_rate: f64,
    pub sources: BTreeMap<String, u64>,
    pub migrations: u64,
    pub aborted: u64,
    pub intermediate: u64,
    pub final_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsRecord {
    Run(RunRecord),
    Query(QueryRecord),
    Load(LoadRecord),
    Migration(MigrationRecord),
    CacheEpoch(CacheEpochRecord),
    Summary(SummaryRecord),
}

impl MetricsRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize") + "\n"
    }
}

/// Serializes records in order, one per line.
pub fn to_jsonl(records: &[MetricsRecord]) -> String {
    records.iter().map(MetricsRecord::to_line).collect()
}

/// Parses a stream written by [`to_jsonl`]; blank lines are skipped.
pub fn parse_jsonl(text: &str) -> Result<Vec<MetricsRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
