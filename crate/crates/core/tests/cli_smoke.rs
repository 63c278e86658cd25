use std::path::Path;
use std::process::Command;

use shardmatch::sim::{parse_jsonl, MetricsRecord};

const SMALL: &str = "machines = 2\nshards = 20\n[graph]\nvertices = 200\n[queries]\ncount = 20\n";

fn shardmatch(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_shardmatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(dir: &Path) -> String {
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    cfg.to_str().unwrap().to_string()
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = dir.path().join("out");
    let o = shardmatch(&["run", "--config", &cfg, "--seed", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "manifest.toml",
        "config.toml",
        "graph.txt",
        "queries.jsonl",
        "partition.json",
        "preprocess.json",
        "metrics-b1-c1-r1.jsonl",
        "verify.json",
        "summary.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let recs = parse_jsonl(&std::fs::read_to_string(out.join("metrics-b1-c1-r1.jsonl")).unwrap()).unwrap();
    assert_eq!(recs.iter().filter(|r| matches!(r, MetricsRecord::Query(_))).count(), 20);

    // The written manifest reproduces the run byte for byte.
    let again = dir.path().join("again");
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    let mpath = dir.path().join("m.toml");
    std::fs::write(&mpath, manifest).unwrap();
    let o = shardmatch(&["simulate", "--manifest", mpath.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(out.join("metrics-b1-c1-r1.jsonl")).unwrap(),
        std::fs::read(again.join("metrics-b1-c1-r1.jsonl")).unwrap()
    );

    let o = shardmatch(&["report", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("latency (ms)") && text.contains("b1-c1-r1"));
    assert!(out.join("report.txt").exists() && out.join("report.json").exists());
}

#[test]
fn stages_run_separately() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    for stage in ["gen-graph", "gen-queries", "partition", "preprocess", "verify"] {
        let o = shardmatch(&[stage, "--config", &cfg, "--out", out_s, "--toggle", "cache=off"]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(out.join("pe_samples.jsonl").exists());
    assert!(out.join("metrics-b1-c0-r1.jsonl").exists());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "machines = 0\n").unwrap();
    let o = shardmatch(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("machines"));

    let o = shardmatch(&["simulate", "--toggle", "cache=maybe"]);
    assert!(!o.status.success());

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = shardmatch(&["report", "--out", empty.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "no data");
}
