//! Path embeddings and the per-shard aggregate R-tree.
//!
//! Each indexed path carries a 2-d dominance embedding and an exact label
//! key. A query path can only match a data path whose embedding dominates
//! its own element-wise and whose label key is equal, so the tree prunes any
//! subtree whose bounding box upper corner fails dominance.

mod blob;
mod embedding;
mod rtree;

pub use blob::{decode_shard_blob, encode_shard_blob, BlobError, ShardBlob, ShardRecord};
pub use embedding::{dominance_embedding, label_key, DominanceEmbedding, LabelKey};
pub use rtree::{ARTree, FilterOutcome, IndexEntry, IndexError, Mbr, MbrSummary, DEFAULT_FANOUT};
