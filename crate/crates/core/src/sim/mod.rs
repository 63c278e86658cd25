//! Single-process cluster simulation on a virtual clock.

pub mod bus;
pub mod clock;
pub mod cluster;
pub mod config;
pub mod metrics;

pub use cluster::{result_digest, sample_queries, Cluster, Prepared, SimError, Worker, COMM_REFRESH_US, LOAD_REPORT_US};
pub use config::{CacheConfig, ConfigError, CostModel, GraphConfig, QueryConfig, SimConfig, Toggles, MAX_MACHINES};
pub use metrics::{
    parse_jsonl, to_jsonl, CacheEpochRecord, LoadRecord, MetricsRecord, MigrationRecord, QueryRecord, RunRecord, SummaryRecord,
};
