//! Load monitoring, dynamic shard correlation, migration decisions and the
//! CRC32-verified batch hot migration protocol.

mod corr;
mod decision;
mod load;
pub mod migrate;
mod warmup;
pub mod wire;

pub use corr::{alpha_decay, dynamic_corr, CorrState, ALPHA_0, CORR_THRESHOLD, EPSILON, T_DECAY_S, T_UPDATE_US};
pub use decision::{
    candidate_priority, migration_count, nearest_rank, plan_round, quantile_for, select_target, BalanceInputs,
    MigrationPlan, TargetCandidate, BATCH_K, CAP, LIGHT_SIGMA, L_THO, NON_CRITICAL_DELTA, RESERVED,
};
pub use load::{cluster_stats, machine_load, ClusterLoadView, LoadSample, SIGMA_TRIGGER, W_COMM, W_CPU, W_MEM};
pub use migrate::{
    hot_migrate, transfer, MigrationReport, MigrationTask, RoutingTable, ShardHost, TransferOutcome, RETRY_BUDGET,
    SWITCH_DWELL_US,
};
pub use warmup::{warmup_pseudo_queries, WarmupTrace, WARMUP_AVG_DEG, WARMUP_QUERIES, WARMUP_SIZES};

/// Standard reflected CRC-32 (IEEE).
pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

#[cfg(test)]
mod tests {
    use super::crc32;

    #[test]
    fn crc_check_values() {
        assert_eq!(crc32(b""), 0);
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        let x = vec![7u8; 1000];
        assert_eq!(crc32(&x), crc32(&x.clone()));
    }
}
