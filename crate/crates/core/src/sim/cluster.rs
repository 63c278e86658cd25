//! Central node and workers driven by one virtual clock.
//!
//! Preparation (partitioning, deployment, indexing, warmup and PE training)
//! depends only on the graph part of the config, so one [`Prepared`] can be
//! shared by clusters that differ in their toggles.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use super::bus::{Bus, BusError, Node, PacketCorruption};
use super::clock::SimClock;
use super::config::{ConfigError, QueryConfig, SimConfig, Toggles};
use super::metrics::{
    CacheEpochRecord, LoadRecord, MetricsRecord, MigrationRecord, QueryRecord, RunRecord, SummaryRecord,
};
use crate::balancer::wire::{Message, RoutingEntry};
use crate::balancer::{
    cluster_stats, crc32, dynamic_corr, hot_migrate, plan_round, warmup_pseudo_queries, BalanceInputs,
    ClusterLoadView, CorrState, LoadSample, MigrationReport, MigrationTask, RoutingTable, ShardHost, WarmupTrace,
};
use crate::cache::{degree_threshold, Access, AccessSource, TwoLevelCache};
use crate::embed::{decode_shard_blob, encode_shard_blob, IndexError, MbrSummary};
use crate::exec::{bind_path, execute_plan, PathCatalog, PathFetch, ShardIndex};
use crate::graph::{
    generate_nws, sample_query_graph, GraphError, LabeledGraph, MatchMapping, QueryGraph, MAX_PATH_LEN,
};
use crate::partition::{
    allocate_shards, partition_assignment, shards_from_assignment, static_correlation, DeploymentPlan,
    PartitionError, Shard, StaticCorrelation,
};
use crate::ranker::{
    annotate_samples, candidate_shards, extract_cover, global_features, rank_plan, sample_target, shard_features,
    train_adaptive, workload_paths, GbdtModel, GlobalFeatures, PESample, QueryPath,
};
use crate::{MachineId, PathId, ShardId};

pub const LOAD_REPORT_US: u64 = 500_000;
pub const COMM_REFRESH_US: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// Everything computed before the first query.
#[derive(Debug)]
pub struct Prepared {
    pub config: SimConfig,
    pub graph: LabeledGraph,
    pub assign: Vec<ShardId>,
    pub shards: Vec<Shard>,
    pub correlation: StaticCorrelation,
    pub deployment: DeploymentPlan,
    pub catalog: PathCatalog,
    /// Encoded index blob per shard; the migration payload.
    pub payloads: Vec<Arc<Vec<u8>>>,
    pub indexes: Vec<Arc<ShardIndex>>,
    pub warmup: WarmupTrace,
    /// Co-query window after warmup.
    pub warm_corr: CorrState,
    /// Mean index pruning rate per shard over the warmup queries.
    pub prune: Vec<f64>,
    pub global: GlobalFeatures,
    pub samples: Vec<PESample>,
    /// `None` when too few samples could be annotated; plans stay unranked.
    pub model: Option<GbdtModel>,
    pub theta_d: f64,
}

impl Prepared {
    pub fn build(config: &SimConfig) -> Result<Self, SimError> {
        for w in config.validate()? {
            log::warn!("{w}");
        }
        let gc = &config.graph;
        let m = config.shards;
        let graph = generate_nws(gc.vertices, gc.k, gc.p_add, gc.labels, config.seed)?;
        let assign = partition_assignment(&graph, m, config.max_shard_spread, config.seed)?;
        let shards = shards_from_assignment(&graph, &assign, m);
        let correlation = static_correlation(&shards, &graph, MAX_PATH_LEN);
        let deployment = allocate_shards(&shards, &config.specs(), &correlation)?;
        let catalog = PathCatalog::build(&graph, &assign, m);
        let mut payloads = Vec::with_capacity(m);
        let mut indexes = Vec::with_capacity(m);
        for s in 0..m as ShardId {
            let bytes = encode_shard_blob(&catalog.shard_blob(s));
            let blob = decode_shard_blob(&bytes).expect("fresh blob decodes");
            indexes.push(Arc::new(ShardIndex::from_blob(&blob)?));
            payloads.push(Arc::new(bytes));
        }

        // Warmup routes each pseudo-query to the shards whose filter keeps a
        // candidate for one of its cover paths, and measures pruning on the way.
        let mut prune_sum = vec![0.0; m];
        let mut prune_n = vec![0u64; m];
        let mut warm_corr = CorrState::new(0);
        let mut route = |q: &QueryGraph| {
            let mut hit = BTreeSet::new();
            for p in extract_cover(q.graph()) {
                let o_q = p.embedding(catalog.max_degree);
                let key = p.key();
                for idx in &indexes {
                    let total = idx.len_counts[p.len() - 1];
                    if total == 0 {
                        continue;
                    }
                    let kept = idx.tree.filter_candidates(&o_q, &key).len() as u64;
                    prune_sum[idx.shard as usize] += 1.0 - kept as f64 / total as f64;
                    prune_n[idx.shard as usize] += 1;
                    if kept > 0 {
                        hit.insert(idx.shard);
                    }
                }
            }
            hit
        };
        let warmup = warmup_pseudo_queries(&graph, config.warmup_queries, config.seed, 0, &mut warm_corr, &mut route);
        let prune = prune_sum
            .iter()
            .zip(&prune_n)
            .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect();

        let feats: Vec<_> = shards
            .iter()
            .map(|s| shard_features(s, &catalog.shard_paths(s.id), &graph))
            .collect();
        let global = global_features(&feats);
        let plain: Vec<ShardIndex> = indexes.iter().map(|i| (**i).clone()).collect();
        let samples = annotate_samples(
            &workload_paths(&warmup.queries),
            sample_target(catalog.len()),
            &catalog,
            &plain,
            &global,
        );
        let model = match train_adaptive(&samples) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("PE model not trained ({e}); plans fall back to cover order");
                None
            }
        };
        let theta_d = degree_threshold(&graph);
        Ok(Self {
            config: config.clone(),
            graph,
            assign,
            shards,
            correlation,
            deployment,
            catalog,
            payloads,
            indexes,
            warmup,
            warm_corr,
            prune,
            global,
            samples,
            model,
            theta_d,
        })
    }

    /// The configured query workload: `(seed, query)` pairs.
    pub fn queries(&self) -> Vec<(u64, QueryGraph)> {
        sample_queries(&self.graph, &self.config.queries, self.config.seed)
    }
}

/// Samples `qc.count` queries with sizes cycling through the configured
/// range. Each query's seed is recorded so a failure can be replayed.
pub fn sample_queries(g: &LabeledGraph, qc: &QueryConfig, seed: u64) -> Vec<(u64, QueryGraph)> {
    let sizes = qc.max_vertices - qc.min_vertices + 1;
    let mut out = Vec::with_capacity(qc.count);
    let mut i = 0u64;
    while out.len() < qc.count && i < 20 * qc.count as u64 + 20 {
        let n_q = (qc.min_vertices + (i as usize % sizes)).min(g.vertex_count());
        let s = seed.wrapping_mul(1_000_003).wrapping_add(i);
        i += 1;
        match sample_query_graph(g, n_q, qc.avg_deg_lo, qc.avg_deg_hi, s) {
            Ok(q) => out.push((s, q)),
            Err(e) => log::debug!("query seed {s} skipped: {e}"),
        }
    }
    out
}

/// CRC32 over the sorted mappings.
pub fn result_digest(results: &BTreeSet<MatchMapping>) -> u32 {
    let mut bytes = Vec::new();
    for m in results {
        for v in &m.0 {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.push(0xff);
    }
    crc32(&bytes)
}

/// One worker: its shard indexes, their payloads and its routing copy.
#[derive(Debug, Clone)]
pub struct Worker {
    pub id: MachineId,
    indexes: BTreeMap<ShardId, Arc<ShardIndex>>,
    payloads: BTreeMap<ShardId, Arc<Vec<u8>>>,
    pub routing: RoutingTable,
}

impl Worker {
    pub fn holds(&self, shard: ShardId) -> bool {
        self.indexes.contains_key(&shard)
    }

    pub fn shards(&self) -> Vec<ShardId> {
        self.indexes.keys().copied().collect()
    }

    pub fn payload(&self, shard: ShardId) -> Option<&[u8]> {
        self.payloads.get(&shard).map(|p| p.as_slice())
    }
}

/// Installs into workers; releases are queued and applied after the dwell.
struct Host<'a> {
    workers: &'a mut [Worker],
    released: Vec<(MachineId, ShardId)>,
}

impl ShardHost for Host<'_> {
    fn machine_count(&self) -> usize {
        self.workers.len()
    }

    fn export(&self, machine: MachineId, shard: ShardId) -> Vec<u8> {
        self.workers[machine as usize]
            .payload(shard)
            .unwrap_or_else(|| panic!("machine {machine} does not hold shard {shard}"))
            .to_vec()
    }

    fn install(&mut self, machine: MachineId, shard: ShardId, payload: &[u8]) -> Result<MbrSummary, String> {
        let blob = decode_shard_blob(payload).map_err(|e| e.to_string())?;
        if blob.shard != shard {
            return Err(format!("payload is shard {}, expected {shard}", blob.shard));
        }
        let idx = ShardIndex::from_blob(&blob).map_err(|e| e.to_string())?;
        let summary = idx.tree.summary(shard);
        let w = &mut self.workers[machine as usize];
        w.indexes.insert(shard, Arc::new(idx));
        w.payloads.insert(shard, Arc::new(payload.to_vec()));
        Ok(summary)
    }

    fn release(&mut self, machine: MachineId, shard: ShardId) {
        self.released.push((machine, shard));
    }
}

#[derive(Debug)]
enum Event {
    LoadReport,
    CommRefresh,
    /// Publishes a routing version to the query path and the workers.
    Switch { version: u64, entries: Vec<RoutingEntry> },
    Release { machine: MachineId, shard: ShardId },
}

#[derive(Debug, Clone, Copy, Default)]
struct ShardActivity {
    cpu_ms: f64,
    cross_queries: u64,
}

pub struct Cluster {
    prep: Arc<Prepared>,
    pub toggles: Toggles,
    clock: SimClock<Event>,
    now_us: u64,
    pub bus: Bus,
    /// Central authoritative table, updated when a batch is verified.
    routing: RoutingTable,
    /// Snapshot queries read; catches up at each switch instant.
    published: RoutingTable,
    last_switch_us: u64,
    workers: Vec<Worker>,
    corr: CorrState,
    pub cache: TwoLevelCache,
    activity: Vec<ShardActivity>,
    /// `(queries, cross-shard queries)` per machine since the last refresh.
    machine_queries: Vec<(u64, u64)>,
    latest: Vec<Option<LoadSample>>,
    view: ClusterLoadView,
    /// Per-shard loads behind `view`.
    snapshot: Vec<f64>,
    records: Vec<MetricsRecord>,
    query_seq: u64,
    latency_total: f64,
    intermediate_total: u64,
    migrated_total: u64,
    aborted_total: u64,
    pending_moves: usize,
    pending_deferred: usize,
    fault_seed: u64,
}

impl Cluster {
    pub fn from_config(config: &SimConfig) -> Result<Self, SimError> {
        let prep = Arc::new(Prepared::build(config)?);
        Ok(Self::spawn(prep, config.toggles))
    }

    pub fn spawn(prep: Arc<Prepared>, toggles: Toggles) -> Self {
        let cfg = &prep.config;
        let n = cfg.machines;
        let m = cfg.shards;
        let summaries: Vec<MbrSummary> = prep
            .indexes
            .iter()
            .map(|i| i.tree.summary(i.shard))
            .collect();
        let routing = RoutingTable::new(prep.deployment.placement.clone(), summaries);
        let workers = (0..n as MachineId)
            .map(|k| {
                let mine = prep.deployment.shards_on(k);
                Worker {
                    id: k,
                    indexes: mine.iter().map(|&s| (s, prep.indexes[s as usize].clone())).collect(),
                    payloads: mine.iter().map(|&s| (s, prep.payloads[s as usize].clone())).collect(),
                    routing: routing.clone(),
                }
            })
            .collect();
        let cache = TwoLevelCache::new(
            toggles.cache_policy(),
            n,
            cfg.cache.master_capacity,
            cfg.cache.slave_capacity,
            prep.theta_d,
            cfg.seed,
        );
        let mut clock = SimClock::new();
        clock.schedule(LOAD_REPORT_US, Event::LoadReport);
        clock.schedule(COMM_REFRESH_US, Event::CommRefresh);
        let run = RunRecord {
            seed: cfg.seed,
            toggles,
            machines: n,
            shards: m,
            data_paths: prep.catalog.len(),
            pe_samples: prep.samples.len(),
            pe_trees: prep.model.as_ref().map_or(0, |m| m.num_trees()),
        };
        Self {
            toggles,
            clock,
            now_us: 0,
            bus: Bus::new(),
            published: routing.clone(),
            routing,
            last_switch_us: 0,
            workers,
            corr: prep.warm_corr.clone(),
            cache,
            activity: vec![ShardActivity::default(); m],
            machine_queries: vec![(0, 0); n],
            latest: vec![None; m],
            view: ClusterLoadView::new(vec![0.0; n], 0.0),
            snapshot: vec![0.0; m],
            records: vec![MetricsRecord::Run(run)],
            query_seq: 0,
            latency_total: 0.0,
            intermediate_total: 0,
            migrated_total: 0,
            aborted_total: 0,
            pending_moves: 0,
            pending_deferred: 0,
            fault_seed: cfg.seed ^ 0xC0FF_EE00,
            prep,
        }
    }

    pub fn prepared(&self) -> &Prepared {
        &self.prep
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn workers(&self) -> &[Worker] {
        &self.workers
    }

    /// Authoritative owners.
    pub fn routing(&self) -> &RoutingTable {
        &self.routing
    }

    /// Owners as seen by queries right now.
    pub fn published_routing(&self) -> &RoutingTable {
        &self.published
    }

    pub fn load_view(&self) -> &ClusterLoadView {
        &self.view
    }

    pub fn metrics(&self) -> &[MetricsRecord] {
        &self.records
    }

    /// Turns on packet corruption for migration data.
    pub fn inject_fault(&mut self, probability: f64) -> Result<(), BusError> {
        self.bus.set_fault(Some(PacketCorruption::new(probability, self.fault_seed)?));
        Ok(())
    }

    pub fn clear_fault(&mut self) {
        self.bus.set_fault(None);
    }

    /// Redeploys shards before any traffic, bypassing migration. Used to
    /// construct skewed placements.
    pub fn override_placement(&mut self, placement: &[MachineId]) {
        assert_eq!(placement.len(), self.prep.config.shards, "one machine per shard");
        assert!(placement.iter().all(|&k| (k as usize) < self.workers.len()), "machine out of range");
        let summaries = self.routing.summaries().to_vec();
        self.routing = RoutingTable::new(placement.to_vec(), summaries);
        self.published = self.routing.clone();
        for w in &mut self.workers {
            w.indexes.clear();
            w.payloads.clear();
            w.routing = self.routing.clone();
        }
        for (s, &k) in placement.iter().enumerate() {
            let w = &mut self.workers[k as usize];
            w.indexes.insert(s as ShardId, self.prep.indexes[s].clone());
            w.payloads.insert(s as ShardId, self.prep.payloads[s].clone());
        }
    }

    /// Fires every timer due at or before `t`, then moves the clock to `t`.
    pub fn advance_to(&mut self, t: u64) {
        while self.clock.peek_time().is_some_and(|pt| pt <= t) {
            let (at, e) = self.clock.pop().expect("peeked");
            self.now_us = self.now_us.max(at);
            self.handle(at, e);
        }
        self.now_us = self.now_us.max(t);
    }

    fn handle(&mut self, at: u64, e: Event) {
        match e {
            Event::LoadReport => {
                self.report_loads(at);
                self.clock.schedule(at + LOAD_REPORT_US, Event::LoadReport);
            }
            Event::CommRefresh => {
                self.refresh(at);
                self.clock.schedule(at + COMM_REFRESH_US, Event::CommRefresh);
            }
            Event::Switch { version, entries } => {
                self.published.apply(version, &entries);
                for w in &mut self.workers {
                    w.routing.apply(version, &entries);
                }
            }
            Event::Release { machine, shard } => {
                // A shard that has meanwhile come back stays.
                if self.published.owner(shard) != machine && self.routing.owner(shard) != machine {
                    let w = &mut self.workers[machine as usize];
                    w.indexes.remove(&shard);
                    w.payloads.remove(&shard);
                }
                self.corr.migrating.remove(&shard);
            }
        }
    }

    /// Each worker reports one sample per shard it serves. CPU utilization
    /// is the shard's share of the whole machine over the period.
    fn report_loads(&mut self, at: u64) {
        let period_ms = LOAD_REPORT_US as f64 / 1000.0;
        let specs = self.prep.config.specs();
        for k in 0..self.workers.len() {
            let mine: Vec<ShardId> = (0..self.published.shard_count() as ShardId)
                .filter(|&s| self.published.owner(s) as usize == k)
                .collect();
            let samples: Vec<LoadSample> = mine
                .iter()
                .map(|&s| {
                    let a = self.activity[s as usize];
                    LoadSample {
                        shard: s,
                        u_cpu: (a.cpu_ms / (period_ms * specs[k].cores.max(1) as f64)).min(1.0),
                        comm: a.cross_queries as f64 * 1e6 / LOAD_REPORT_US as f64,
                        mem_ratio: (self.prep.shards[s as usize].size_bytes as f64
                            / specs[k].mem_capacity_bytes as f64)
                            .min(1.0),
                        time_us: at,
                    }
                })
                .collect();
            let load = crate::balancer::machine_load(&samples, self.view.comm_max);
            let msg = Message::LoadReport {
                machine: k as MachineId,
                time_us: at,
                load,
                samples,
            };
            let wire = self
                .bus
                .send(at, Node::Worker(k as MachineId), Node::Central, &msg)
                .expect("reports go to the central node");
            if let Ok(Message::LoadReport { samples, .. }) = Message::decode(&wire) {
                for s in samples {
                    self.latest[s.shard as usize] = Some(s);
                }
            }
        }
        self.activity.iter_mut().for_each(|a| *a = ShardActivity::default());
    }

    fn machine_loads(&self, shard_loads: &[f64], owners: &[MachineId]) -> Vec<f64> {
        let mut loads = vec![0.0; self.workers.len()];
        for (s, &l) in shard_loads.iter().enumerate() {
            loads[owners[s] as usize] += l;
        }
        loads
    }

    /// `Comm_max` refresh, cluster view and, when enabled, one balancing round.
    fn refresh(&mut self, at: u64) {
        let comm_max = self.latest.iter().flatten().map(|s| s.comm).fold(0.0, f64::max);
        let shard_loads: Vec<f64> = self
            .latest
            .iter()
            .map(|s| s.map_or(0.0, |s| s.load(comm_max)))
            .collect();
        let loads = self.machine_loads(&shard_loads, self.published.owners());
        self.view = ClusterLoadView::new(loads, comm_max);
        self.snapshot = shard_loads.clone();
        let (mut migrated, mut deferred) = (0, 0);
        if self.toggles.balancing && self.view.triggered() {
            let (m, d) = self.balance_round(at, &shard_loads);
            migrated = m;
            deferred = d;
        }
        migrated += std::mem::take(&mut self.pending_moves);
        deferred += std::mem::take(&mut self.pending_deferred);
        let total: u64 = self.cache.source_counts.values().sum();
        let hits: u64 = self
            .cache
            .source_counts
            .iter()
            .filter(|(s, _)| s.is_cache_hit())
            .map(|(_, c)| c)
            .sum();
        self.records.push(MetricsRecord::Load(LoadRecord {
            time_us: at,
            loads: self.view.loads.clone(),
            mean: self.view.mean,
            sigma: self.view.sigma,
            comm_max,
            triggered: self.view.triggered(),
            migrated,
            deferred,
            routing_version: self.routing.version,
            hit_rate: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
        }));
        self.machine_queries.iter_mut().for_each(|q| *q = (0, 0));
    }

    /// Plans and executes one round against the current view. Returns
    /// `(switched, deferred)`.
    fn balance_round(&mut self, at: u64, shard_loads: &[f64]) -> (usize, usize) {
        let prep = self.prep.clone();
        let mean_size =
            prep.shards.iter().map(|s| s.size_bytes as f64).sum::<f64>() / prep.shards.len().max(1) as f64;
        let sizes: Vec<f64> = prep.shards.iter().map(|s| s.size_bytes as f64 / mean_size.max(1.0)).collect();
        let cross_ratio: Vec<f64> = self
            .machine_queries
            .iter()
            .map(|&(t, c)| if t == 0 { 0.0 } else { c as f64 / t as f64 })
            .collect();
        let placement = self.routing.owners().to_vec();
        let corr_state = self.corr.clone();
        let plans = plan_round(
            &BalanceInputs {
                view: &self.view,
                shard_loads,
                placement: &placement,
                sizes: &sizes,
                prune: &prep.prune,
                cross_ratio: &cross_ratio,
            },
            &|i, j| dynamic_corr(i, j, &prep.correlation, &corr_state),
            &|i, j| prep.correlation.w_label(i as usize, j as usize),
        );
        let sigma_before = self.view.sigma;
        let mut moves = Vec::new();
        let mut switched = Vec::new();
        let mut aborted = Vec::new();
        let mut deferred = 0;
        let (mut transmissions, mut switch_us, mut release_us) = (0u64, at, at);
        for plan in &plans {
            deferred += plan.deferred.len();
            for batch in &plan.batches {
                let tasks: Vec<MigrationTask> = batch
                    .iter()
                    .map(|&s| MigrationTask {
                        shard: s,
                        source: plan.source,
                        target: plan.moves.iter().find(|m| m.0 == s).expect("batched shards are moves").1,
                    })
                    .collect();
                moves.extend(tasks.iter().map(|t| (t.shard, t.source, t.target)));
                let r = self.run_batch(&tasks, at);
                transmissions += r.outcomes.iter().map(|o| o.transmissions as u64).sum::<u64>();
                switched.extend(r.switched.iter().copied());
                aborted.extend(r.aborted.iter().copied());
                switch_us = switch_us.max(r.switch_us);
                release_us = release_us.max(r.release_us);
            }
        }
        if moves.is_empty() {
            return (0, deferred);
        }
        let after = self.machine_loads(shard_loads, self.routing.owners());
        let (_, sigma_after, _) = cluster_stats(&after);
        self.records.push(MetricsRecord::Migration(MigrationRecord {
            time_us: at,
            sigma_before,
            sigma_after,
            moves,
            switched: switched.clone(),
            aborted: aborted.clone(),
            transmissions,
            switch_us,
            release_us,
        }));
        (switched.len(), deferred)
    }

    /// Runs one batch through the hot migration protocol starting no
    /// earlier than `at` and after the previous routing switch, so routing
    /// versions are published in order.
    fn run_batch(&mut self, tasks: &[MigrationTask], at: u64) -> MigrationReport {
        let start = at.max(self.last_switch_us);
        self.corr.migrating.extend(tasks.iter().map(|t| t.shard));
        let mut host = Host {
            workers: &mut self.workers,
            released: Vec::new(),
        };
        let report = hot_migrate(tasks, &mut host, &mut self.routing, &mut self.bus, start)
            .expect("migration traffic is whitelisted");
        let released = host.released;
        if !report.switched.is_empty() {
            let entries: Vec<RoutingEntry> = report
                .switched
                .iter()
                .map(|&s| RoutingEntry {
                    shard: s,
                    machine: self.routing.owner(s),
                    summary: *self.routing.summary(s),
                })
                .collect();
            self.last_switch_us = report.switch_us;
            self.clock.schedule(
                report.switch_us,
                Event::Switch {
                    version: report.routing_version,
                    entries,
                },
            );
        }
        for (machine, shard) in released {
            self.clock.schedule(report.release_us, Event::Release { machine, shard });
        }
        for &s in &report.aborted {
            self.corr.migrating.remove(&s);
        }
        self.migrated_total += report.switched.len() as u64;
        self.aborted_total += report.aborted.len() as u64;
        report
    }

    /// Migrates the given shards now, outside the balancing loop.
    pub fn migrate_shards(&mut self, tasks: &[MigrationTask]) -> MigrationReport {
        for t in tasks {
            assert_eq!(self.routing.owner(t.shard), t.source, "shard {} is not on machine {}", t.shard, t.source);
        }
        let at = self.now_us;
        let r = self.run_batch(tasks, at);
        self.pending_moves += r.switched.len();
        self.records.push(MetricsRecord::Migration(MigrationRecord {
            time_us: at,
            sigma_before: self.view.sigma,
            sigma_after: self.view.sigma,
            moves: tasks.iter().map(|t| (t.shard, t.source, t.target)).collect(),
            switched: r.switched.clone(),
            aborted: r.aborted.clone(),
            transmissions: r.outcomes.iter().map(|o| o.transmissions as u64).sum(),
            switch_us: r.switch_us,
            release_us: r.release_us,
        }));
        r
    }

    /// Runs one balancing round on the last load view regardless of the
    /// toggle. Returns σ of that view and σ of the same per-shard loads
    /// regrouped under the resulting owners.
    pub fn force_balance_round(&mut self) -> (f64, f64) {
        self.advance_to(self.now_us);
        let shard_loads = self.snapshot.clone();
        let before = self.machine_loads(&shard_loads, self.routing.owners());
        self.view = ClusterLoadView::new(before, self.view.comm_max);
        let at = self.now_us;
        let (m, d) = self.balance_round(at, &shard_loads);
        self.pending_moves += m;
        self.pending_deferred += d;
        let after = self.machine_loads(&shard_loads, self.routing.owners());
        (self.view.sigma, cluster_stats(&after).1)
    }

    /// Answers `q` at the current instant.
    pub fn submit_query(&mut self, q: &QueryGraph) -> BTreeSet<MatchMapping> {
        self.execute(q, 0)
    }

    /// Answers each query in turn, one arrival interval apart.
    pub fn run_queries(&mut self, queries: &[(u64, QueryGraph)]) -> Vec<BTreeSet<MatchMapping>> {
        let interval = self.prep.config.queries.interval_us;
        queries
            .iter()
            .map(|(seed, q)| {
                let r = self.execute(q, *seed);
                self.now_us += interval;
                r
            })
            .collect()
    }

    fn execute(&mut self, q: &QueryGraph, query_seed: u64) -> BTreeSet<MatchMapping> {
        self.advance_to(self.now_us);
        let now = self.now_us;
        let prep = self.prep.clone();
        let cost = prep.config.cost.clone();
        let cat = &prep.catalog;
        let order = self.toggles.plan_order(prep.config.reverse_plans);
        let plan = rank_plan(
            q.graph(),
            prep.model.as_ref(),
            &prep.global,
            self.published.summaries(),
            cat.max_degree,
            order,
        );
        let paths: Vec<QueryPath> = plan.paths().map(|p| p.path.clone()).collect();

        let published = &self.published;
        let workers = &self.workers;
        let activity = &mut self.activity;
        let mut touched: BTreeSet<ShardId> = BTreeSet::new();
        let mut owner_of: BTreeMap<PathId, MachineId> = BTreeMap::new();
        let mut fetch_order: Vec<PathId> = Vec::new();
        let mut latency = 0.0;
        let mut messages = 0u64;
        let mut fetch = |_: usize, qp: &QueryPath| -> PathFetch {
            let o_q = qp.embedding(cat.max_degree);
            let key = qp.key();
            let mut out = PathFetch::default();
            let mut per_machine: BTreeMap<MachineId, f64> = BTreeMap::new();
            for s in candidate_shards(&o_q, published.summaries()) {
                let k = published.owner(s);
                let idx = workers[k as usize]
                    .indexes
                    .get(&s)
                    .unwrap_or_else(|| panic!("routing names machine {k} for shard {s} but it holds no copy"));
                let f = idx.tree.filter(&o_q, &key);
                if !f.ids.is_empty() {
                    touched.insert(s);
                }
                let t = cost.filter_base_ms + cost.filter_node_ms * f.nodes_visited as f64;
                activity[s as usize].cpu_ms += t;
                *per_machine.entry(k).or_default() += t;
                out.scanned += idx.len_counts[qp.len() - 1];
                for id in f.ids {
                    owner_of.insert(id, k);
                    fetch_order.push(id);
                    out.candidates.push((id, bind_path(qp, cat.path(id), &prep.graph)));
                }
            }
            messages += 2 * per_machine.len() as u64;
            latency += per_machine.values().fold(0.0, |a: f64, &b| a.max(b + 2.0 * cost.message_ms));
            out
        };
        let (results, stats, contributed) = execute_plan(&prep.graph, q.graph(), &paths, &mut fetch);

        // Path data for the candidates comes through the cache tiers.
        let accesses: Vec<Access> = contributed
            .iter()
            .map(|&(id, hit)| Access {
                path: id,
                pattern: cat.keys[id as usize].fingerprint(),
                mean_degree: cat.path(id).mean_degree(),
                matched: hit,
            })
            .collect();
        self.cache.begin_query(now, &accesses);
        let mut sources: BTreeMap<String, u64> = BTreeMap::new();
        for id in fetch_order {
            let (_, src) = self.cache.access_path(id, owner_of.get(&id).copied(), now);
            latency += src.latency_ms();
            *sources.entry(src.tag().to_string()).or_default() += 1;
        }
        latency += cost.join_row_ms * stats.intermediate as f64;
        let len = cat.len() as PathId;
        if let Some(ep) = self.cache.end_query(now, latency, &|p| p < len) {
            self.records.push(MetricsRecord::CacheEpoch(CacheEpochRecord {
                time_us: now,
                epoch: ep.epoch,
                hit_rate: ep.hit_rate,
                mean_query_latency_ms: ep.mean_query_latency_ms,
                weights: ep.weights,
                t_up: ep.t_up,
                model_version: ep.model_version,
            }));
        }

        let cross = touched.len() >= 2;
        self.corr.record(now, &touched);
        let machines: BTreeSet<MachineId> = touched.iter().map(|&s| self.published.owner(s)).collect();
        for &k in &machines {
            self.machine_queries[k as usize].0 += 1;
            self.machine_queries[k as usize].1 += cross as u64;
        }
        if cross {
            for &s in &touched {
                self.activity[s as usize].cross_queries += 1;
            }
        }
        self.latency_total += latency;
        self.intermediate_total += stats.intermediate;
        self.records.push(MetricsRecord::Query(QueryRecord {
            seq: self.query_seq,
            time_us: now,
            query_seed,
            vertices: q.vertex_count(),
            edges: q.edge_count(),
            plan_order: plan.order,
            plan_paths: paths.len(),
            cross_shard: cross,
            latency_ms: latency,
            index: stats.index,
            local: stats.local,
            verify: stats.verify,
            intermediate: stats.intermediate,
            sources,
            messages,
            results: results.len(),
            digest: result_digest(&results),
        }));
        self.query_seq += 1;
        results
    }

    /// Drains timers up to now and appends the summary record.
    pub fn finish(&mut self) -> &[MetricsRecord] {
        self.advance_to(self.now_us);
        let sources: BTreeMap<String, u64> = self
            .cache
            .source_counts
            .iter()
            .map(|(s, c)| (s.tag().to_string(), *c))
            .collect();
        let total: u64 = sources.values().sum();
        let hits: u64 = AccessSource::ALL
            .iter()
            .filter(|s| s.is_cache_hit())
            .map(|s| self.cache.source_counts.get(s).copied().unwrap_or(0))
            .sum();
        self.records.push(MetricsRecord::Summary(SummaryRecord {
            queries: self.query_seq,
            mean_latency_ms: if self.query_seq == 0 { 0.0 } else { self.latency_total / self.query_seq as f64 },
            hit_rate: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
            sources,
            migrations: self.migrated_total,
            aborted: self.aborted_total,
            intermediate: self.intermediate_total,
            final_sigma: self.view.sigma,
        }));
        &self.records
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::brute_force_match;

    fn small() -> SimConfig {
        SimConfig {
            machines: 2,
            shards: 12,
            seed: 3,
            graph: crate::sim::config::GraphConfig {
                vertices: 80,
                ..Default::default()
            },
            queries: QueryConfig {
                count: 12,
                ..Default::default()
            },
            warmup_queries: 100,
            ..Default::default()
        }
    }

    #[test]
    fn answers_match_oracle() {
        let prep = Arc::new(Prepared::build(&small()).unwrap());
        let queries = prep.queries();
        assert_eq!(queries.len(), 12);
        for t in [Toggles::default(), Toggles { balancing: false, cache: false, ranking: false }] {
            let mut c = Cluster::spawn(prep.clone(), t);
            let got = c.run_queries(&queries);
            for ((seed, q), r) in queries.iter().zip(&got) {
                assert_eq!(r, &brute_force_match(&prep.graph, q).unwrap(), "query seed {seed}");
            }
        }
    }

    #[test]
    fn absent_label_gives_empty_answer() {
        let prep = Arc::new(Prepared::build(&small()).unwrap());
        let mut c = Cluster::spawn(prep.clone(), Toggles::default());
        let q = QueryGraph::new(LabeledGraph::from_edges(vec![99, 0], 100, &[(0, 1)]).unwrap()).unwrap();
        assert!(c.submit_query(&q).is_empty());
        let Some(MetricsRecord::Query(r)) = c.metrics().last() else { panic!("no query record") };
        assert_eq!(r.index.candidates_out, 0);
    }

    #[test]
    fn idle_cluster_reports_memory_only() {
        let prep = Arc::new(Prepared::build(&small()).unwrap());
        let mut c = Cluster::spawn(prep.clone(), Toggles::default());
        c.advance_to(2 * COMM_REFRESH_US);
        let specs = prep.config.specs();
        for (k, &l) in c.load_view().loads.iter().enumerate() {
            let mem: f64 = prep
                .deployment
                .shards_on(k as MachineId)
                .iter()
                .map(|&s| prep.shards[s as usize].size_bytes as f64 / specs[k].mem_capacity_bytes as f64)
                .sum();
            assert!((l - 0.3 * mem).abs() < 1e-12);
        }
        assert!(c.bus.log().iter().all(|e| e.kind == "LoadReport"));
    }

    #[test]
    fn migration_keeps_answers_and_isolation() {
        let prep = Arc::new(Prepared::build(&small()).unwrap());
        let queries = prep.queries();
        let mut base = Cluster::spawn(prep.clone(), Toggles { balancing: false, ..Default::default() });
        let want = base.run_queries(&queries);
        let mut c = Cluster::spawn(prep.clone(), Toggles { balancing: false, ..Default::default() });
        c.inject_fault(0.3).unwrap();
        let mut got = Vec::new();
        for (i, pair) in queries.iter().enumerate() {
            if i % 3 == 0 {
                let s = (i / 3) as ShardId;
                let src = c.routing().owner(s);
                let r = c.migrate_shards(&[MigrationTask { shard: s, source: src, target: 1 - src }]);
                assert_eq!(r.switched, vec![s]);
            }
            got.extend(c.run_queries(std::slice::from_ref(pair)));
        }
        assert_eq!(got, want);
        assert!(c
            .bus
            .worker_edges()
            .all(|e| e.kind == "MigrationData" || e.kind == "RetransmitRequest"));
        c.advance_to(c.now_us() + 1_000_000);
        for s in 0..12 {
            let holders = c.workers().iter().filter(|w| w.holds(s)).count();
            assert_eq!(holders, 1, "shard {s}");
            assert!(c.workers()[c.published_routing().owner(s) as usize].holds(s));
        }
    }

    #[test]
    fn same_seed_same_metrics() {
        let run = || {
            let mut c = Cluster::from_config(&small()).unwrap();
            let qs = c.prepared().queries();
            c.run_queries(&qs);
            crate::sim::metrics::to_jsonl(c.finish())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bad_probability_is_rejected() {
        let mut c = Cluster::from_config(&small()).unwrap();
        assert!(c.inject_fault(1.5).is_err());
        assert!(c.inject_fault(0.0).is_ok());
    }
}
