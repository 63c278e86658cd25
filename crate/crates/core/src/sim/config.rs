//! Cluster configuration, read from TOML.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::CachePolicy;
use crate::partition::MachineSpec;
use crate::ranker::PlanOrder;

/// Workers the system model allows.
pub const MAX_MACHINES: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Field { field: &'static str, reason: String },
    #[error("config parse error: {0}")]
    Parse(String),
}

fn field(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        reason: reason.into(),
    }
}

/// The three switchable mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Toggles {
    pub balancing: bool,
    /// On: adaptive value-based cache. Off: plain LRU at equal capacity.
    pub cache: bool,
    pub ranking: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            balancing: true,
            cache: true,
            ranking: true,
        }
    }
}

impl Toggles {
    /// All eight on/off combinations.
    pub fn all() -> Vec<Toggles> {
        (0..8u8)
            .map(|b| Toggles {
                balancing: b & 1 != 0,
                cache: b & 2 != 0,
                ranking: b & 4 != 0,
            })
            .collect()
    }

    pub fn plan_order(&self, reverse: bool) -> PlanOrder {
        match (self.ranking, reverse) {
            (false, _) => PlanOrder::Unranked,
            (true, false) => PlanOrder::Ranked,
            (true, true) => PlanOrder::Reverse,
        }
    }

    /// Short run label, e.g. `b1-c0-r1`.
    pub fn tag(&self) -> String {
        format!("b{}-c{}-r{}", self.balancing as u8, self.cache as u8, self.ranking as u8)
    }

    pub fn cache_policy(&self) -> CachePolicy {
        if self.cache {
            CachePolicy::Adaptive
        } else {
            CachePolicy::Lru
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub vertices: usize,
    /// Ring neighbours per vertex.
    pub k: usize,
    pub p_add: f64,
    pub labels: u32,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            vertices: 300,
            k: 4,
            p_add: 0.1,
            labels: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueryConfig {
    pub count: usize,
    pub min_vertices: usize,
    pub max_vertices: usize,
    pub avg_deg_lo: f64,
    pub avg_deg_hi: f64,
    /// Simulated gap between query arrivals.
    pub interval_us: u64,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            count: 30,
            min_vertices: 4,
            max_vertices: 8,
            avg_deg_lo: 1.0,
            avg_deg_hi: 3.0,
            interval_us: 20_000,
        }
    }
}

/// Simulated costs in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    pub filter_base_ms: f64,
    pub filter_node_ms: f64,
    pub message_ms: f64,
    pub join_row_ms: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            filter_base_ms: crate::ranker::FILTER_C0_MS,
            filter_node_ms: crate::ranker::FILTER_C1_MS,
            message_ms: 0.05,
            join_row_ms: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CacheConfig {
    pub master_capacity: usize,
    pub slave_capacity: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            master_capacity: 200,
            slave_capacity: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Worker count `n`.
    pub machines: usize,
    /// Shard count `m`.
    pub shards: usize,
    pub seed: u64,
    pub toggles: Toggles,
    pub graph: GraphConfig,
    pub queries: QueryConfig,
    pub warmup_queries: usize,
    pub cost: CostModel,
    pub cache: CacheConfig,
    /// Per-machine hardware; uniform machines when empty.
    pub machine_specs: Vec<MachineSpec>,
    /// Vertex-count spread allowed between shards.
    pub max_shard_spread: f64,
    /// With ranking on, execute plans in ascending predicted PE instead.
    pub reverse_plans: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            machines: 2,
            shards: 100,
            seed: 0,
            toggles: Toggles::default(),
            graph: GraphConfig::default(),
            queries: QueryConfig::default(),
            warmup_queries: crate::balancer::WARMUP_QUERIES,
            cost: CostModel::default(),
            cache: CacheConfig::default(),
            machine_specs: Vec::new(),
            max_shard_spread: crate::partition::DEFAULT_MAX_SPREAD,
            reverse_plans: false,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: SimConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field; returns warnings for settings outside the
    /// modelled regime that are still accepted.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let mut warnings = Vec::new();
        if self.machines == 0 || self.machines > MAX_MACHINES {
            return Err(field("machines", format!("{} not in 1..={MAX_MACHINES}", self.machines)));
        }
        if self.shards == 0 {
            return Err(field("shards", "must be positive"));
        }
        if self.shards > self.graph.vertices {
            return Err(field(
                "shards",
                format!("{} shards for {} vertices", self.shards, self.graph.vertices),
            ));
        }
        let (lo, hi) = (50 * self.machines, 100 * self.machines);
        if !(lo..=hi).contains(&self.shards) {
            warnings.push(format!(
                "shards: {} outside the {lo}..={hi} regime for {} machines",
                self.shards, self.machines
            ));
        }
        let g = &self.graph;
        if g.k < 2 || !g.k.is_multiple_of(2) || g.vertices <= g.k {
            return Err(field("graph.k", format!("need vertices > k >= 2 with k even, got k={}", g.k)));
        }
        if !(0.0..=1.0).contains(&g.p_add) {
            return Err(field("graph.p_add", format!("{} outside [0, 1]", g.p_add)));
        }
        if g.labels == 0 {
            return Err(field("graph.labels", "must be positive"));
        }
        let q = &self.queries;
        if q.min_vertices < crate::graph::QUERY_MIN_VERTICES || q.max_vertices > crate::graph::QUERY_MAX_VERTICES {
            return Err(field(
                "queries.min_vertices",
                format!(
                    "sizes {}..={} outside {}..={}",
                    q.min_vertices,
                    q.max_vertices,
                    crate::graph::QUERY_MIN_VERTICES,
                    crate::graph::QUERY_MAX_VERTICES
                ),
            ));
        }
        if q.min_vertices > q.max_vertices {
            return Err(field("queries.max_vertices", "below min_vertices"));
        }
        if !(q.avg_deg_lo >= 1.0 && q.avg_deg_lo <= q.avg_deg_hi) {
            return Err(field("queries.avg_deg_lo", format!("[{}, {}] is not a range above 1", q.avg_deg_lo, q.avg_deg_hi)));
        }
        if q.interval_us == 0 {
            return Err(field("queries.interval_us", "must be positive"));
        }
        let c = &self.cost;
        for (name, v) in [
            ("cost.filter_base_ms", c.filter_base_ms),
            ("cost.filter_node_ms", c.filter_node_ms),
            ("cost.message_ms", c.message_ms),
            ("cost.join_row_ms", c.join_row_ms),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(field(name, format!("{v} is not a non-negative number")));
            }
        }
        if c.filter_base_ms <= 0.0 {
            return Err(field("cost.filter_base_ms", "must be positive"));
        }
        if self.cache.master_capacity == 0 || self.cache.slave_capacity == 0 {
            return Err(field("cache.master_capacity", "capacities must be positive"));
        }
        if !self.machine_specs.is_empty() && self.machine_specs.len() != self.machines {
            return Err(field(
                "machine_specs",
                format!("{} specs for {} machines", self.machine_specs.len(), self.machines),
            ));
        }
        if !(self.max_shard_spread > 0.0 && self.max_shard_spread.is_finite()) {
            return Err(field("max_shard_spread", "must be positive"));
        }
        Ok(warnings)
    }

    pub fn plan_order(&self) -> PlanOrder {
        self.toggles.plan_order(self.reverse_plans)
    }

    pub fn specs(&self) -> Vec<MachineSpec> {
        if self.machine_specs.is_empty() {
            (0..self.machines as u32).map(MachineSpec::uniform).collect()
        } else {
            self.machine_specs.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_checks() {
        let ok = SimConfig {
            machines: 2,
            shards: 100,
            ..Default::default()
        };
        assert_eq!(ok.validate().unwrap(), Vec::<String>::new());
        let small = SimConfig {
            shards: 10,
            ..ok.clone()
        };
        assert_eq!(small.validate().unwrap().len(), 1);
        let bad = SimConfig {
            machines: 51,
            ..ok.clone()
        };
        assert!(matches!(bad.validate(), Err(ConfigError::Field { field: "machines", .. })));
        let bad = SimConfig {
            graph: GraphConfig { p_add: 2.0, ..Default::default() },
            ..ok
        };
        assert!(matches!(bad.validate(), Err(ConfigError::Field { field: "graph.p_add", .. })));
    }

    #[test]
    fn toml_round_trip() {
        let c = SimConfig {
            seed: 9,
            toggles: Toggles {
                balancing: false,
                cache: true,
                ranking: false,
            },
            ..Default::default()
        };
        let back = SimConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert!(matches!(SimConfig::from_toml("machines = \"x\""), Err(ConfigError::Parse(_))));
        assert!(matches!(SimConfig::from_toml("bogus = 1"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn eight_toggle_combinations() {
        let all = Toggles::all();
        assert_eq!(all.len(), 8);
        for (i, a) in all.iter().enumerate() {
            assert!(all[i + 1..].iter().all(|b| b != a));
        }
    }
}
