//! Two-level path cache: decayed path features, a learned value function,
//! tiered eviction and an LRU baseline.

mod features;
mod manager;
mod store;
mod tracker;
mod weights;
mod workload;

pub use features::{
    cache_value, decay_feature, degree_threshold, feature_snapshot, t_low, trigger_threshold, window_and_sync,
    Features, PathCounters, SyncSettings, WindowStats, FREQ_WINDOW_QUERIES, TAU_S, THETA_D_FLOOR, T_LOW_GAP,
};
pub use manager::{
    AccessSource, CacheEpoch, CacheManager, CachePolicy, TwoLevelCache, EPOCH_QUERIES, MASTER_SCOPE, RETRAIN_DROP,
    SLAVE_SCOPE,
};
pub use store::{classify, evict, AdaptiveCache, CacheCtx, CacheEntry, EvictOutcome, EvictionClass, LruCache, PathCache, TierStats};
pub use tracker::{Access, AccessTracker, PathMeta, CO_TOP, PROTECTED_PATTERNS};
pub use weights::{
    accepts, evaluate_policy, incremental_train, init_weights, lambda_for, oracle_target, reward,
    weights_from_contributions, FeatureSnapshot, TrainOutcome, WeightModel, BATCH_SIZE, INIT_SNAPSHOTS,
    MIN_TRAIN_SNAPSHOTS, REWARD_GAIN, TRAIN_SNAPSHOTS, UNIFORM_WEIGHTS,
};
pub use workload::{run_workload, Workload, WorkloadConfig, WorkloadRun};
