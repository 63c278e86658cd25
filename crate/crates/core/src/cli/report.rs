//! Comparison tables over one or more metrics streams.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use super::{read, CliError};
use crate::sim::{parse_jsonl, MetricsRecord};

pub const NO_DATA: &str = "no data";

/// One parsed metrics file.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub name: String,
    pub records: Vec<MetricsRecord>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub text: String,
    pub json: Value,
}

pub fn load_metrics_file(path: &Path) -> Result<RunMetrics, CliError> {
    let records = parse_jsonl(&read(path)?).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().trim_start_matches("metrics-").to_string())
        .unwrap_or_default();
    Ok(RunMetrics { name, records })
}

/// Every `metrics-*.jsonl` in `dir`, sorted by name. A missing directory
/// yields no runs.
pub fn load_metrics_dir(dir: &Path) -> Result<Vec<RunMetrics>, CliError> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Ok(Vec::new());
    };
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("metrics-") && n.ends_with(".jsonl"))
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| load_metrics_file(p)).collect()
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn queries(run: &RunMetrics) -> impl Iterator<Item = &crate::sim::QueryRecord> {
    run.records.iter().filter_map(|r| match r {
        MetricsRecord::Query(q) => Some(q),
        _ => None,
    })
}

fn cache_on(run: &RunMetrics) -> Option<bool> {
    run.records.iter().find_map(|r| match r {
        MetricsRecord::Run(h) => Some(h.toggles.cache),
        _ => None,
    })
}

pub fn build_report(runs: &[RunMetrics]) -> Report {
    let mut text = String::new();
    let mut json_runs = Vec::new();
    if runs.iter().all(|r| r.records.is_empty()) {
        return Report {
            text: format!("{NO_DATA}\n"),
            json: json!({ "runs": [] }),
        };
    }

    writeln!(text, "latency (ms)").unwrap();
    writeln!(
        text,
        "{:<12} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "run", "count", "mean", "p50", "p90", "p99", "max"
    )
    .unwrap();
    for run in runs {
        let mut lat: Vec<f64> = queries(run).map(|q| q.latency_ms).collect();
        lat.sort_by(f64::total_cmp);
        let entry = if lat.is_empty() {
            writeln!(text, "{:<12} {NO_DATA}", run.name).unwrap();
            json!({ "name": run.name, "count": 0 })
        } else {
            let mean = lat.iter().sum::<f64>() / lat.len() as f64;
            let (p50, p90, p99) = (percentile(&lat, 50.0), percentile(&lat, 90.0), percentile(&lat, 99.0));
            let max = *lat.last().unwrap();
            writeln!(
                text,
                "{:<12} {:>6} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
                run.name,
                lat.len(),
                mean,
                p50,
                p90,
                p99,
                max
            )
            .unwrap();
            json!({ "name": run.name, "count": lat.len(), "mean": mean, "p50": p50, "p90": p90, "p99": p99, "max": max })
        };
        json_runs.push(entry);
    }

    writeln!(text, "\nload sigma timeline").unwrap();
    let mut sigma_json = BTreeMap::new();
    for run in runs {
        let loads: Vec<_> = run
            .records
            .iter()
            .filter_map(|r| match r {
                MetricsRecord::Load(l) => Some(l),
                _ => None,
            })
            .collect();
        if loads.is_empty() {
            writeln!(text, "{:<12} {NO_DATA}", run.name).unwrap();
            continue;
        }
        let line: Vec<String> = loads
            .iter()
            .map(|l| {
                let mark = if l.migrated > 0 { "*" } else { "" };
                format!("{:.1}s:{:.4}{mark}", l.time_us as f64 / 1e6, l.sigma)
            })
            .collect();
        writeln!(text, "{:<12} {}", run.name, line.join(" ")).unwrap();
        sigma_json.insert(
            run.name.clone(),
            loads
                .iter()
                .map(|l| json!({ "time_us": l.time_us, "sigma": l.sigma, "migrated": l.migrated }))
                .collect::<Vec<_>>(),
        );
    }
    writeln!(text, "(* marks a refresh that switched shards)").unwrap();

    writeln!(text, "\ncache accesses by tier").unwrap();
    let mut tiers: [BTreeMap<String, u64>; 2] = Default::default();
    for run in runs {
        let Some(on) = cache_on(run) else { continue };
        for q in queries(run) {
            for (k, v) in &q.sources {
                *tiers[on as usize].entry(k.clone()).or_default() += v;
            }
        }
    }
    let totals = [tiers[1].values().sum::<u64>(), tiers[0].values().sum::<u64>()];
    writeln!(text, "{:<16} {:>10} {:>10}", "tier", "adaptive", "lru").unwrap();
    let names: std::collections::BTreeSet<&String> = tiers[0].keys().chain(tiers[1].keys()).collect();
    let frac = |m: &BTreeMap<String, u64>, k: &str, t: u64| {
        if t == 0 {
            None
        } else {
            Some(m.get(k).copied().unwrap_or(0) as f64 / t as f64)
        }
    };
    let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |f| format!("{f:.4}"));
    let mut tier_json = BTreeMap::new();
    for k in &names {
        let a = frac(&tiers[1], k, totals[0]);
        let l = frac(&tiers[0], k, totals[1]);
        writeln!(text, "{:<16} {:>10} {:>10}", k, show(a), show(l)).unwrap();
        tier_json.insert(k.to_string(), json!({ "adaptive": a, "lru": l }));
    }
    if names.is_empty() {
        writeln!(text, "{NO_DATA}").unwrap();
    }

    writeln!(text, "\nintermediate candidates by plan order").unwrap();
    let mut by_order: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for run in runs {
        for q in queries(run) {
            let e = by_order.entry(format!("{:?}", q.plan_order).to_lowercase()).or_default();
            e.0 += 1;
            e.1 += q.intermediate;
        }
    }
    writeln!(text, "{:<10} {:>8} {:>12} {:>10}", "order", "queries", "total", "mean").unwrap();
    let mut order_json = BTreeMap::new();
    for (k, (n, sum)) in &by_order {
        let mean = *sum as f64 / *n as f64;
        writeln!(text, "{:<10} {:>8} {:>12} {:>10.1}", k, n, sum, mean).unwrap();
        order_json.insert(k.clone(), json!({ "queries": n, "total": sum, "mean": mean }));
    }
    if by_order.is_empty() {
        writeln!(text, "{NO_DATA}").unwrap();
    }

    writeln!(text, "\nintermediate candidates per query").unwrap();
    write!(text, "{:<6} {:>12}", "seq", "query_seed").unwrap();
    for run in runs {
        write!(text, " {:>12}", run.name).unwrap();
    }
    writeln!(text).unwrap();
    let per_run: Vec<BTreeMap<u64, (u64, u64)>> = runs
        .iter()
        .map(|r| queries(r).map(|q| (q.seq, (q.query_seed, q.intermediate))).collect())
        .collect();
    let seqs: std::collections::BTreeSet<u64> = per_run.iter().flat_map(|m| m.keys().copied()).collect();
    for s in &seqs {
        let seed = per_run.iter().find_map(|m| m.get(s).map(|v| v.0)).unwrap_or(0);
        write!(text, "{:<6} {:>12}", s, seed).unwrap();
        for m in &per_run {
            match m.get(s) {
                Some((_, i)) => write!(text, " {:>12}", i).unwrap(),
                None => write!(text, " {:>12}", "-").unwrap(),
            }
        }
        writeln!(text).unwrap();
    }

    Report {
        text,
        json: json!({
            "runs": json_runs,
            "sigma": sigma_json,
            "tiers": tier_json,
            "plan_orders": order_json,
        }),
    }
}
