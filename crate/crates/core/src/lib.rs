//! Simulated distributed exact subgraph matching.
//!
//! A labeled data graph is split into many small shards, each indexed by an
//! aggregate R-tree over monotone path embeddings. A central node plus a set
//! of simulated workers answer subgraph queries exactly, while three online
//! mechanisms run alongside query processing:
//!
//! - correlation-aware load balancing with CRC32-verified hot shard migration
//!   ([`balancer`]),
//! - a two-level path cache whose value function is re-weighted online
//!   ([`cache`]),
//! - query plans ordered by a learned pruning-efficiency score ([`ranker`]).
//!
//! Every answer is checked against the brute-force matcher in
//! [`graph::brute_force_match`].

pub mod balancer;
pub mod cache;
pub mod cli;
pub mod embed;
pub mod exec;
pub mod graph;
pub mod partition;
pub mod ranker;
pub mod sim;

/// Dense vertex identifier inside a [`graph::LabeledGraph`].
pub type VertexId = u32;
/// Vertex label drawn from a finite alphabet `0..label_count`.
pub type Label = u32;
/// Shard identifier, `0..m`.
pub type ShardId = u32;
/// Worker machine identifier, `0..n`.
pub type MachineId = u32;
/// Global identifier of an enumerated data path.
pub type PathId = u64;
