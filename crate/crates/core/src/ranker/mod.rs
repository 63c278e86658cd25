//! PE-score plan ranking: structural features, filter-based annotation, a
//! boosted-tree regressor and the shard-grouped plan order.

mod annotate;
mod features;
mod gbdt;
mod plan;

pub use annotate::{
    annotate_samples, export_samples, filter_time_ms, pe_score, sample_target, train_adaptive, train_pe_model,
    workload_paths, PESample, FILTER_C0_MS, FILTER_C1_MS, MIN_SAMPLES, SAMPLE_FRACTION,
};
pub use features::{global_features, power_law_gamma, shard_features, GlobalFeatures, ShardFeatureSet};
pub use gbdt::{
    adaptive_tree_count, GbdtError, GbdtModel, RegressionTree, TreeNode, LEARNING_RATE, MAX_DEPTH, MAX_TREES,
    MIN_TRAIN_SAMPLES, MIN_TREES,
};
pub use plan::{
    candidate_shards, dependency_pass, extract_cover, path_feature_row, rank_plan, PlanGroup, PlanOrder, PlannedPath,
    QueryPath, QueryPlan, FEATURE_WIDTH,
};
