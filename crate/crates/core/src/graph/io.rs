//! Plain-text edge list with a vertex label section.
//!
//! ```text
//! # comment
//! <num_vertices> <num_labels>
//! v <id> <label>
//! e <u> <v>
//! ```
//!
//! Vertex ids in the file may be any distinct non-negative integers; they
//! are compacted to `0..num_vertices` in ascending order.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use super::{GraphError, LabeledGraph};
use crate::VertexId;

pub fn load_graph(path: impl AsRef<Path>) -> Result<LabeledGraph, GraphError> {
    let text = std::fs::read_to_string(path)?;
    parse_graph(&text)
}

pub fn parse_graph(text: &str) -> Result<LabeledGraph, GraphError> {
    let err = |line: usize, msg: String| GraphError::Parse { line, msg };
    let mut header: Option<(usize, u32)> = None;
    let mut vertices: BTreeMap<u64, (u32, usize)> = BTreeMap::new();
    let mut raw_edges: Vec<(u64, u64, usize)> = Vec::new();
    let mut seen_edges = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| -> Result<u64, GraphError> {
            s.parse::<u64>()
                .map_err(|_| err(line_no, format!("expected a non-negative integer, got {s:?}")))
        };
        if header.is_none() {
            if fields.len() != 2 {
                return Err(err(line_no, "header must be `<num_vertices> <num_labels>`".into()));
            }
            let n = num(fields[0])? as usize;
            let l = num(fields[1])?;
            if l == 0 || l > u32::MAX as u64 {
                return Err(err(line_no, format!("label count {l} out of range")));
            }
            header = Some((n, l as u32));
            continue;
        }
        match fields.as_slice() {
            ["v", id, label] => {
                let id = num(id)?;
                let label = num(label)?;
                let (_, label_count) = header.unwrap();
                if label >= label_count as u64 {
                    return Err(err(
                        line_no,
                        format!("label {label} outside alphabet of size {label_count}"),
                    ));
                }
                if vertices.insert(id, (label as u32, line_no)).is_some() {
                    return Err(err(line_no, format!("vertex {id} declared twice")));
                }
            }
            ["e", u, v] => {
                let (u, v) = (num(u)?, num(v)?);
                if u == v {
                    return Err(err(line_no, format!("self-loop on vertex {u}")));
                }
                if !seen_edges.insert((u.min(v), u.max(v))) {
                    return Err(err(line_no, format!("duplicate edge ({u}, {v})")));
                }
                raw_edges.push((u, v, line_no));
            }
            _ => return Err(err(line_no, format!("unrecognized record {line:?}"))),
        }
    }

    let (n, label_count) = header.ok_or_else(|| err(0, "missing header line".into()))?;
    if vertices.len() != n {
        return Err(err(
            0,
            format!("header declares {n} vertices, found {}", vertices.len()),
        ));
    }
    let compact: BTreeMap<u64, VertexId> = vertices
        .keys()
        .enumerate()
        .map(|(i, &id)| (id, i as VertexId))
        .collect();
    let labels = vertices.values().map(|&(l, _)| l).collect();
    let mut edges = Vec::with_capacity(raw_edges.len());
    for (u, v, line_no) in raw_edges {
        let cu = *compact
            .get(&u)
            .ok_or_else(|| err(line_no, format!("edge references undeclared vertex {u}")))?;
        let cv = *compact
            .get(&v)
            .ok_or_else(|| err(line_no, format!("edge references undeclared vertex {v}")))?;
        edges.push((cu, cv));
    }
    LabeledGraph::from_edges(labels, label_count, &edges)
}

/// Serializes `g` in the format accepted by [`parse_graph`].
pub fn write_graph(g: &LabeledGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", g.vertex_count(), g.label_count());
    for (v, l) in g.labels().iter().enumerate() {
        let _ = writeln!(out, "v {v} {l}");
    }
    for (u, v) in g.edges() {
        let _ = writeln!(out, "e {u} {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_file() {
        let g = parse_graph("3 1\nv 0 0\nv 1 0\nv 2 0\ne 0 1\ne 1 2\ne 2 0\n").unwrap();
        assert_eq!(g.edge_count(), 3);
        assert!(g.has_edge(0, 2) && g.has_edge(2, 0));
    }

    #[test]
    fn self_loop_is_an_error() {
        let e = parse_graph("2 1\nv 0 0\nv 1 0\ne 1 1\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("self-loop"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn empty_edge_section() {
        let g = parse_graph("# no edges\n2 3\nv 0 2\nv 1 1\n").unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.vertex_count(), 2);
    }

    #[test]
    fn duplicate_edge_rejected_with_line() {
        let e = parse_graph("2 1\nv 0 0\nv 1 0\ne 0 1\ne 1 0\n").unwrap_err();
        assert!(matches!(e, GraphError::Parse { line: 5, .. }), "{e}");
    }

    #[test]
    fn malformed_line_reports_number() {
        let e = parse_graph("2 1\nv 0 0\nv 1 x\n").unwrap_err();
        assert!(matches!(e, GraphError::Parse { line: 3, .. }), "{e}");
    }

    #[test]
    fn ids_are_compacted() {
        let g = parse_graph("3 2\nv 40 1\nv 7 0\nv 100 1\ne 40 100\ne 7 40\n").unwrap();
        // 7 -> 0, 40 -> 1, 100 -> 2
        assert_eq!(g.labels(), &[0, 1, 1]);
        assert!(g.has_edge(1, 2) && g.has_edge(0, 1));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let g = parse_graph("4 2\nv 0 0\nv 1 1\nv 2 0\nv 3 1\ne 0 1\ne 1 2\ne 2 3\n").unwrap();
        assert_eq!(parse_graph(&write_graph(&g)).unwrap(), g);
    }
}
