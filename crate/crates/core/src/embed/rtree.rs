//! Static aggregate R-tree bulk-loaded with sort-tile-recursive packing.
//!
//! Nodes carry their bounding box, the number of entries below them and a
//! 64-bit signature of the label keys below them. Queries ask for every entry
//! that dominates a point and carries an exact label key.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DominanceEmbedding, LabelKey};
use crate::{PathId, ShardId};

pub const DEFAULT_FANOUT: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("duplicate path id {0}")]
    DuplicateId(PathId),
    #[error("fanout must be at least 2, got {0}")]
    Fanout(usize),
}

/// Axis-aligned rectangle in embedding space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mbr {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Mbr {
    pub fn point(e: &DominanceEmbedding) -> Self {
        Self { min: e.0, max: e.0 }
    }

    pub fn union(&self, other: &Mbr) -> Mbr {
        Mbr {
            min: [self.min[0].min(other.min[0]), self.min[1].min(other.min[1])],
            max: [self.max[0].max(other.max[0]), self.max[1].max(other.max[1])],
        }
    }

    pub fn contains(&self, other: &Mbr) -> bool {
        (0..2).all(|d| self.min[d] <= other.min[d] && other.max[d] <= self.max[d])
    }

    pub fn contains_point(&self, e: &DominanceEmbedding) -> bool {
        self.contains(&Mbr::point(e))
    }

    fn center(&self) -> [f64; 2] {
        [
            (self.min[0] + self.max[0]) / 2.0,
            (self.min[1] + self.max[1]) / 2.0,
        ]
    }
}

/// What the central node keeps about a shard's index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbrSummary {
    pub shard: ShardId,
    pub mbr: Mbr,
    pub entry_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub path_id: PathId,
    pub embedding: DominanceEmbedding,
    pub key: LabelKey,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Internal { children: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    mbr: Mbr,
    count: usize,
    label_sig: u64,
    kind: NodeKind,
}

/// Result of a filter call together with the work it took.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub ids: Vec<PathId>,
    pub nodes_visited: usize,
}

#[derive(Debug, Clone)]
pub struct ARTree {
    entries: Vec<IndexEntry>,
    sig_bits: Vec<u64>,
    nodes: Vec<Node>,
    root: Option<usize>,
    fanout: usize,
}

fn sig_bit(key: &LabelKey) -> u64 {
    1u64 << key.signature_slot()
}

/// Sort-tile-recursive grouping: returns `items` reordered into runs of at
/// most `fanout` consecutive elements.
fn str_pack<T>(mut items: Vec<(([f64; 2], u64), T)>, fanout: usize) -> Vec<Vec<T>> {
    let n = items.len();
    let groups = n.div_ceil(fanout);
    let slices = (groups as f64).sqrt().ceil() as usize;
    let slice_len = slices.max(1) * fanout;
    items.sort_by(|a, b| a.0 .0[0].total_cmp(&b.0 .0[0]).then(a.0 .1.cmp(&b.0 .1)));
    let mut out = Vec::with_capacity(groups);
    let mut rest = items;
    while !rest.is_empty() {
        let tail = rest.split_off(slice_len.min(rest.len()));
        let mut slice = rest;
        rest = tail;
        slice.sort_by(|a, b| a.0 .0[1].total_cmp(&b.0 .0[1]).then(a.0 .1.cmp(&b.0 .1)));
        let mut it = slice.into_iter().map(|(_, t)| t).peekable();
        while it.peek().is_some() {
            out.push(it.by_ref().take(fanout).collect());
        }
    }
    out
}

impl ARTree {
    pub fn build(entries: Vec<IndexEntry>) -> Result<Self, IndexError> {
        Self::build_with_fanout(entries, DEFAULT_FANOUT)
    }

    pub fn build_with_fanout(entries: Vec<IndexEntry>, fanout: usize) -> Result<Self, IndexError> {
        if fanout < 2 {
            return Err(IndexError::Fanout(fanout));
        }
        let mut ids = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !ids.insert(e.path_id) {
                return Err(IndexError::DuplicateId(e.path_id));
            }
        }
        let mut tree = ARTree {
            entries: Vec::with_capacity(entries.len()),
            sig_bits: Vec::with_capacity(entries.len()),
            nodes: Vec::new(),
            root: None,
            fanout,
        };
        if entries.is_empty() {
            return Ok(tree);
        }

        let keyed = entries
            .into_iter()
            .map(|e| ((e.embedding.0, e.path_id), e))
            .collect();
        let mut level: Vec<usize> = Vec::new();
        for group in str_pack(keyed, fanout) {
            let start = tree.entries.len();
            let mut mbr = Mbr::point(&group[0].embedding);
            let mut sig = 0u64;
            for e in group {
                mbr = mbr.union(&Mbr::point(&e.embedding));
                let bit = sig_bit(&e.key);
                sig |= bit;
                tree.sig_bits.push(bit);
                tree.entries.push(e);
            }
            let end = tree.entries.len();
            level.push(tree.nodes.len());
            tree.nodes.push(Node {
                mbr,
                count: end - start,
                label_sig: sig,
                kind: NodeKind::Leaf { start, end },
            });
        }
        while level.len() > 1 {
            let keyed = level
                .iter()
                .map(|&i| ((tree.nodes[i].mbr.center(), i as u64), i))
                .collect();
            let mut next = Vec::new();
            for children in str_pack(keyed, fanout) {
                let mut mbr = tree.nodes[children[0]].mbr;
                let mut count = 0;
                let mut sig = 0;
                for &c in &children {
                    mbr = mbr.union(&tree.nodes[c].mbr);
                    count += tree.nodes[c].count;
                    sig |= tree.nodes[c].label_sig;
                }
                next.push(tree.nodes.len());
                tree.nodes.push(Node {
                    mbr,
                    count,
                    label_sig: sig,
                    kind: NodeKind::Internal { children },
                });
            }
            level = next;
        }
        tree.root = level.first().copied();
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    /// Entries in leaf (packing) order.
    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn root_mbr(&self) -> Option<Mbr> {
        self.root.map(|r| self.nodes[r].mbr)
    }

    pub fn summary(&self, shard: ShardId) -> MbrSummary {
        MbrSummary {
            shard,
            mbr: self.root_mbr().unwrap_or(Mbr {
                min: [0.0; 2],
                max: [0.0; 2],
            }),
            entry_count: self.entries.len() as u64,
        }
    }

    /// Ids of entries whose embedding dominates `o_q` and whose key equals `key_q`.
    pub fn filter_candidates(&self, o_q: &DominanceEmbedding, key_q: &LabelKey) -> Vec<PathId> {
        self.filter(o_q, key_q).ids
    }

    pub fn filter(&self, o_q: &DominanceEmbedding, key_q: &LabelKey) -> FilterOutcome {
        let mut out = FilterOutcome::default();
        let Some(root) = self.root else {
            return out;
        };
        let bit = sig_bit(key_q);
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            out.nodes_visited += 1;
            let node = &self.nodes[i];
            // The upper corner bounds every embedding below this node.
            let upper = DominanceEmbedding(node.mbr.max);
            if !o_q.dominated_by(&upper) || node.label_sig & bit == 0 {
                continue;
            }
            match &node.kind {
                NodeKind::Leaf { start, end } => {
                    for j in *start..*end {
                        let e = &self.entries[j];
                        if self.sig_bits[j] == bit
                            && o_q.dominated_by(&e.embedding)
                            && e.key == *key_q
                        {
                            out.ids.push(e.path_id);
                        }
                    }
                }
                NodeKind::Internal { children } => stack.extend(children.iter().rev()),
            }
        }
        out
    }

    /// Ids of entries located exactly at `p`.
    pub fn point_query(&self, p: &DominanceEmbedding) -> Vec<PathId> {
        let mut ids = Vec::new();
        let Some(root) = self.root else {
            return ids;
        };
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if !node.mbr.contains_point(p) {
                continue;
            }
            match &node.kind {
                NodeKind::Leaf { start, end } => ids.extend(
                    self.entries[*start..*end]
                        .iter()
                        .filter(|e| e.embedding == *p)
                        .map(|e| e.path_id),
                ),
                NodeKind::Internal { children } => stack.extend(children.iter().rev()),
            }
        }
        ids
    }

    /// Structural audit: containment, aggregate counts, signatures, unique ids.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut ids = HashSet::new();
        for e in &self.entries {
            if !ids.insert(e.path_id) {
                return Err(format!("duplicate id {}", e.path_id));
            }
        }
        let Some(root) = self.root else {
            return if self.entries.is_empty() {
                Ok(())
            } else {
                Err("entries without a root".into())
            };
        };
        let mut reached = 0;
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            match &node.kind {
                NodeKind::Leaf { start, end } => {
                    if end - start != node.count || node.count > self.fanout {
                        return Err(format!("leaf {i} count mismatch"));
                    }
                    for e in &self.entries[*start..*end] {
                        if !node.mbr.contains_point(&e.embedding) {
                            return Err(format!("entry {} outside leaf {i}", e.path_id));
                        }
                        if node.label_sig & sig_bit(&e.key) == 0 {
                            return Err(format!("leaf {i} signature misses entry {}", e.path_id));
                        }
                    }
                    reached += node.count;
                }
                NodeKind::Internal { children } => {
                    if children.len() > self.fanout {
                        return Err(format!("node {i} exceeds fanout"));
                    }
                    let mut count = 0;
                    for &c in children {
                        let child = &self.nodes[c];
                        if !node.mbr.contains(&child.mbr) {
                            return Err(format!("child {c} escapes node {i}"));
                        }
                        if child.label_sig & !node.label_sig != 0 {
                            return Err(format!("node {i} signature misses child {c}"));
                        }
                        count += child.count;
                        stack.push(c);
                    }
                    if count != node.count {
                        return Err(format!("node {i} aggregate count mismatch"));
                    }
                }
            }
        }
        if reached != self.entries.len() {
            return Err("not every entry is reachable".into());
        }
        Ok(())
    }
}
