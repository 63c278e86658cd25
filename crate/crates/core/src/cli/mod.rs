//! Command-line entry points. Every subcommand resolves the same
//! [`RunManifest`] from `--manifest`, `--config`, `--seed`, `--toggle` and
//! `--out`, then writes its artifacts under the output directory.

mod report;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{brute_force_match, parse_graph, write_graph, GraphError, MatchMapping, QueryGraph};
use crate::partition::{edge_cut, random_assignment};
use crate::ranker::export_samples;
use crate::sim::{to_jsonl, Cluster, ConfigError, Prepared, SimConfig, SimError, Toggles};

pub use report::{build_report, load_metrics_dir, Report, NO_DATA};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("bad --toggle {0:?}: expected balancing|cache|ranking=on|off")]
    Toggle(String),
    #[error("verification failed for query seed {seed}: {missing} missing, {extra} extra")]
    Mismatch { seed: u64, missing: usize, extra: usize },
}

impl CliError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Mismatch { .. } => 3,
            CliError::Config(_) | CliError::Toggle(_) | CliError::Format { .. } => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("artifacts serialize") + "\n"
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToggleKey {
    Balancing,
    Cache,
    Ranking,
}

/// Parses `name=on|off`.
pub fn parse_toggle(s: &str) -> Result<(ToggleKey, bool), CliError> {
    let bad = || CliError::Toggle(s.to_string());
    let (k, v) = s.split_once('=').ok_or_else(bad)?;
    let key = match k.trim() {
        "balancing" => ToggleKey::Balancing,
        "cache" => ToggleKey::Cache,
        "ranking" => ToggleKey::Ranking,
        _ => return Err(bad()),
    };
    let on = match v.trim() {
        "on" => true,
        "off" => false,
        _ => return Err(bad()),
    };
    Ok((key, on))
}

fn clap_toggle(s: &str) -> Result<(ToggleKey, bool), String> {
    parse_toggle(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Run manifest (TOML); flags given alongside override it.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Simulation config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `balancing|cache|ranking=on|off`, repeatable.
    #[arg(long = "toggle", global = true, value_parser = clap_toggle)]
    pub toggles: Vec<(ToggleKey, bool)>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate the data graph.
    GenGraph,
    /// Sample the query workload.
    GenQueries,
    /// Partition into shards and deploy them onto machines.
    Partition,
    /// Build indexes, run warmup and train the PE model.
    Preprocess,
    /// Run the query stream through the simulated cluster.
    Simulate {
        /// Run all eight toggle combinations instead of the manifest's.
        #[arg(long)]
        all_toggles: bool,
    },
    /// Check every answer against the brute-force matcher.
    Verify,
    /// Summarize metrics files into comparison tables.
    Report {
        /// Metrics files; defaults to every metrics-*.jsonl under --out.
        files: Vec<PathBuf>,
    },
    /// gen-graph, partition, preprocess, simulate and verify in one go.
    Run,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "shardmatch", version, about = "Simulated distributed exact subgraph matching")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Fully determines a run for a given binary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub toggles: Toggles,
    pub out: PathBuf,
    pub version: String,
}

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

impl RunManifest {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Resolves flags over an optional manifest file; the seed falls back
    /// to the config's.
    pub fn resolve(args: &GlobalArgs) -> Result<(Self, SimConfig), CliError> {
        let base = match &args.manifest {
            Some(p) => Some(Self::from_toml(&read(p)?).map_err(|msg| CliError::Format { path: p.clone(), msg })?),
            None => None,
        };
        let config_path = args.config.clone().or_else(|| base.as_ref().and_then(|b| b.config.clone()));
        let mut config = match &config_path {
            Some(p) => SimConfig::from_toml(&read(p)?).map_err(|e| match e {
                ConfigError::Parse(msg) => CliError::Format { path: p.clone(), msg },
                other => CliError::Config(other),
            })?,
            None => SimConfig::default(),
        };
        let mut toggles = base.as_ref().map_or(config.toggles, |b| b.toggles);
        for &(k, on) in &args.toggles {
            match k {
                ToggleKey::Balancing => toggles.balancing = on,
                ToggleKey::Cache => toggles.cache = on,
                ToggleKey::Ranking => toggles.ranking = on,
            }
        }
        let seed = args.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(config.seed);
        let out = args
            .out
            .clone()
            .or_else(|| base.as_ref().map(|b| b.out.clone()))
            .unwrap_or_else(|| PathBuf::from("shardmatch-out"));
        config.seed = seed;
        config.toggles = toggles;
        config.validate()?;
        let manifest = Self {
            config: config_path,
            seed,
            toggles,
            out,
            version: version_string(),
        };
        Ok((manifest, config))
    }

    /// Flags that reproduce this manifest.
    pub fn to_args(&self) -> Vec<String> {
        let mut a = Vec::new();
        if let Some(c) = &self.config {
            a.push("--config".into());
            a.push(c.display().to_string());
        }
        a.push("--seed".into());
        a.push(self.seed.to_string());
        for (name, on) in [
            ("balancing", self.toggles.balancing),
            ("cache", self.toggles.cache),
            ("ranking", self.toggles.ranking),
        ] {
            a.push("--toggle".into());
            a.push(format!("{name}={}", if on { "on" } else { "off" }));
        }
        a.push("--out".into());
        a.push(self.out.display().to_string());
        a
    }
}

/// One sampled query with the seed that reproduces it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryFileEntry {
    pub seed: u64,
    pub graph: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub shards: usize,
    pub machines: usize,
    pub vertex_counts: Vec<usize>,
    pub vertex_spread: f64,
    pub edge_cut: usize,
    pub random_edge_cut: usize,
    pub placement: Vec<u32>,
    pub deploy_spread: f64,
    pub assignment: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub data_paths: usize,
    pub paths_per_length: Vec<u64>,
    pub warmup_queries: usize,
    pub warmup_relaxed: usize,
    pub pe_samples: usize,
    pub pe_trees: usize,
    pub global_features: Vec<f64>,
    pub theta_d: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifySummary {
    pub queries: usize,
    pub toggles: Vec<String>,
    pub checked: usize,
    pub matches: usize,
}

fn metrics_path(out: &Path, t: Toggles) -> PathBuf {
    out.join(format!("metrics-{}.jsonl", t.tag()))
}

fn write_queries(out: &Path, queries: &[(u64, QueryGraph)]) -> Result<(), CliError> {
    let text: String = queries
        .iter()
        .map(|(seed, q)| {
            serde_json::to_string(&QueryFileEntry {
                seed: *seed,
                graph: write_graph(q.graph()),
            })
            .expect("query serializes")
                + "\n"
        })
        .collect();
    write(&out.join("queries.jsonl"), &text)
}

/// Reads queries written by `gen-queries`.
pub fn read_queries(path: &Path) -> Result<Vec<(u64, QueryGraph)>, CliError> {
    let mut out = Vec::new();
    for line in read(path)?.lines().filter(|l| !l.trim().is_empty()) {
        let e: QueryFileEntry = serde_json::from_str(line).map_err(|e| CliError::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        out.push((e.seed, QueryGraph::new(parse_graph(&e.graph)?)?));
    }
    Ok(out)
}

fn partition_summary(prep: &Prepared) -> PartitionSummary {
    let counts: Vec<usize> = prep.shards.iter().map(|s| s.vertices.len()).collect();
    let mean = counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64;
    let (lo, hi) = (
        counts.iter().copied().min().unwrap_or(0),
        counts.iter().copied().max().unwrap_or(0),
    );
    let random = random_assignment(prep.graph.vertex_count(), prep.config.shards, prep.config.seed);
    PartitionSummary {
        shards: prep.config.shards,
        machines: prep.config.machines,
        vertex_spread: if mean > 0.0 { (hi - lo) as f64 / mean } else { 0.0 },
        vertex_counts: counts,
        edge_cut: edge_cut(&prep.graph, &prep.assign),
        random_edge_cut: edge_cut(&prep.graph, &random),
        placement: prep.deployment.placement.clone(),
        deploy_spread: prep.deployment.spread(),
        assignment: prep.assign.clone(),
    }
}

fn preprocess_summary(prep: &Prepared) -> PreprocessSummary {
    PreprocessSummary {
        data_paths: prep.catalog.len(),
        paths_per_length: prep.catalog.len_totals.to_vec(),
        warmup_queries: prep.warmup.queries.len(),
        warmup_relaxed: prep.warmup.relaxed,
        pe_samples: prep.samples.len(),
        pe_trees: prep.model.as_ref().map_or(0, |m| m.num_trees()),
        global_features: prep.global.row().to_vec(),
        theta_d: prep.theta_d,
    }
}

/// Runs one toggle set over the workload and returns its answers and
/// metrics stream.
pub fn simulate(prep: &Arc<Prepared>, toggles: Toggles, queries: &[(u64, QueryGraph)]) -> (Vec<BTreeSet<MatchMapping>>, String) {
    let mut c = Cluster::spawn(prep.clone(), toggles);
    let results = c.run_queries(queries);
    let text = to_jsonl(c.finish());
    (results, text)
}

/// First query whose answer differs from the oracle's.
pub fn check_answers(
    queries: &[(u64, QueryGraph)],
    got: &[BTreeSet<MatchMapping>],
    want: &[BTreeSet<MatchMapping>],
) -> Result<(), CliError> {
    for (((seed, _), g), w) in queries.iter().zip(got).zip(want) {
        if g != w {
            return Err(CliError::Mismatch {
                seed: *seed,
                missing: w.difference(g).count(),
                extra: g.difference(w).count(),
            });
        }
    }
    Ok(())
}

fn oracle(prep: &Prepared, queries: &[(u64, QueryGraph)]) -> Result<Vec<BTreeSet<MatchMapping>>, CliError> {
    queries
        .iter()
        .map(|(_, q)| brute_force_match(&prep.graph, q).map_err(CliError::from))
        .collect()
}

fn verify_toggles(
    prep: &Arc<Prepared>,
    manifest: &RunManifest,
    queries: &[(u64, QueryGraph)],
    sets: &[Toggles],
) -> Result<VerifySummary, CliError> {
    let want = oracle(prep, queries)?;
    for &t in sets {
        let (got, text) = simulate(prep, t, queries);
        write(&metrics_path(&manifest.out, t), &text)?;
        check_answers(queries, &got, &want)?;
    }
    Ok(VerifySummary {
        queries: queries.len(),
        toggles: sets.iter().map(|t| t.tag()).collect(),
        checked: queries.len() * sets.len(),
        matches: want.iter().map(|w| w.len()).sum(),
    })
}

/// Writes a stage-failure marker next to the partial artifacts.
fn label_failure(out: &Path, stage: &str, e: &CliError) {
    let _ = write(&out.join(format!("FAILED-{stage}.txt")), &format!("{e}\n"));
}

/// Executes one parsed command; returns the text printed on success.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    if let Command::Report { files } = &cli.command {
        let out = cli.global.out.clone().unwrap_or_else(|| PathBuf::from("shardmatch-out"));
        let runs = if files.is_empty() {
            load_metrics_dir(&out)?
        } else {
            files
                .iter()
                .map(|f| report::load_metrics_file(f))
                .collect::<Result<Vec<_>, _>>()?
        };
        let rep = build_report(&runs);
        if out.is_dir() || files.is_empty() {
            write(&out.join("report.txt"), &rep.text)?;
            write(&out.join("report.json"), &to_json(&rep.json))?;
        }
        return Ok(rep.text);
    }

    let (manifest, config) = RunManifest::resolve(&cli.global)?;
    let out = manifest.out.clone();
    write(&out.join("manifest.toml"), &manifest.to_toml())?;
    write(&out.join("config.toml"), &config.to_toml())?;

    if let Command::GenGraph = cli.command {
        let gc = &config.graph;
        let g = crate::graph::generate_nws(gc.vertices, gc.k, gc.p_add, gc.labels, config.seed)?;
        write(&out.join("graph.txt"), &write_graph(&g))?;
        return Ok(format!("graph: {} vertices, {} edges", g.vertex_count(), g.edge_count()));
    }
    if let Command::GenQueries = cli.command {
        let gc = &config.graph;
        let g = crate::graph::generate_nws(gc.vertices, gc.k, gc.p_add, gc.labels, config.seed)?;
        let qs = crate::sim::sample_queries(&g, &config.queries, config.seed);
        write_queries(&out, &qs)?;
        return Ok(format!("queries: {}", qs.len()));
    }

    let prep = match Prepared::build(&config) {
        Ok(p) => Arc::new(p),
        Err(e) => {
            let e = CliError::from(e);
            label_failure(&out, "prepare", &e);
            return Err(e);
        }
    };
    let queries_file = out.join("queries.jsonl");
    let queries = if queries_file.exists() {
        read_queries(&queries_file)?
    } else {
        prep.queries()
    };
    match &cli.command {
        Command::Partition => {
            let s = partition_summary(&prep);
            write(&out.join("partition.json"), &to_json(&s))?;
            Ok(format!(
                "partition: {} shards, vertex spread {:.3}, deploy spread {:.3}, cut {} (random {})",
                s.shards, s.vertex_spread, s.deploy_spread, s.edge_cut, s.random_edge_cut
            ))
        }
        Command::Preprocess => {
            let s = preprocess_summary(&prep);
            write(&out.join("preprocess.json"), &to_json(&s))?;
            write(&out.join("pe_samples.jsonl"), &export_samples(&prep.samples))?;
            if let Some(m) = &prep.model {
                write(&out.join("pe_model.json"), &to_json(m))?;
            }
            Ok(format!(
                "preprocess: {} data paths, {} PE samples, {} trees",
                s.data_paths, s.pe_samples, s.pe_trees
            ))
        }
        Command::Simulate { all_toggles } => {
            let sets = if *all_toggles { Toggles::all() } else { vec![manifest.toggles] };
            let mut lines = Vec::new();
            for t in sets {
                let (_, text) = simulate(&prep, t, &queries);
                let path = metrics_path(&out, t);
                write(&path, &text)?;
                lines.push(format!("simulate {}: {} queries -> {}", t.tag(), queries.len(), path.display()));
            }
            Ok(lines.join("\n"))
        }
        Command::Verify => {
            let s = verify_toggles(&prep, &manifest, &queries, &[manifest.toggles]).inspect_err(|e| {
                label_failure(&out, "verify", e);
            })?;
            write(&out.join("verify.json"), &to_json(&s))?;
            Ok(format!("verify: {} queries match the oracle", s.queries))
        }
        Command::Run => {
            write(&out.join("graph.txt"), &write_graph(&prep.graph))?;
            if !queries_file.exists() {
                write_queries(&out, &queries)?;
            }
            write(&out.join("partition.json"), &to_json(&partition_summary(&prep)))?;
            write(&out.join("preprocess.json"), &to_json(&preprocess_summary(&prep)))?;
            let s = verify_toggles(&prep, &manifest, &queries, &[manifest.toggles]).inspect_err(|e| {
                label_failure(&out, "verify", e);
            })?;
            write(&out.join("verify.json"), &to_json(&s))?;
            let runs = load_metrics_dir(&out)?;
            let rep = build_report(&runs);
            write(&out.join("summary.json"), &to_json(&rep.json))?;
            Ok(format!("run: {} queries verified; artifacts in {}", s.queries, out.display()))
        }
        Command::GenGraph | Command::GenQueries | Command::Report { .. } => unreachable!("handled above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("shardmatch").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn toggles_parse() {
        assert_eq!(parse_toggle("cache=off").unwrap(), (ToggleKey::Cache, false));
        assert!(parse_toggle("cache").is_err());
        assert!(parse_toggle("speed=on").is_err());
        assert!(parse_toggle("ranking=maybe").is_err());
    }

    #[test]
    fn flags_round_trip_through_manifest() {
        let cli = parse(&["simulate", "--seed", "7", "--toggle", "cache=off", "--out", "/tmp/x"]);
        let (m, cfg) = RunManifest::resolve(&cli.global).unwrap();
        assert_eq!(cfg.seed, 7);
        assert!(!cfg.toggles.cache && cfg.toggles.ranking);
        let back = RunManifest::from_toml(&m.to_toml()).unwrap();
        assert_eq!(back, m);
        let mut args: Vec<String> = vec!["simulate".into()];
        args.extend(m.to_args());
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let (again, _) = RunManifest::resolve(&parse(&refs).global).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn manifest_file_with_flag_override() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            config: None,
            seed: 4,
            toggles: Toggles {
                balancing: false,
                cache: true,
                ranking: true,
            },
            out: dir.path().join("o"),
            version: version_string(),
        };
        let p = dir.path().join("m.toml");
        std::fs::write(&p, m.to_toml()).unwrap();
        let cli = parse(&["verify", "--manifest", p.to_str().unwrap(), "--toggle", "ranking=off"]);
        let (got, _) = RunManifest::resolve(&cli.global).unwrap();
        assert_eq!(got.seed, 4);
        assert_eq!(got.out, m.out);
        assert!(!got.toggles.balancing && !got.toggles.ranking);
    }

    #[test]
    fn mismatch_names_the_seed() {
        let g = crate::graph::generate_nws(30, 4, 0.1, 2, 0).unwrap();
        let q = crate::graph::sample_query_graph(&g, 3, 1.0, 2.0, 5).unwrap();
        let want = vec![brute_force_match(&g, &q).unwrap()];
        let mut got = want.clone();
        got[0].pop_first();
        let e = check_answers(&[(42, q)], &got, &want).unwrap_err();
        assert!(e.to_string().contains("query seed 42"));
        assert_ne!(e.exit_code(), 0);
    }
}
