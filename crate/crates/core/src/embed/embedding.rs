use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::graph::{LabeledGraph, PathInstance};
use crate::Label;

/// Point in `[0,1]^2`: (normalized mean degree, normalized minimum degree).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceEmbedding(pub [f64; 2]);

impl DominanceEmbedding {
    pub const ZERO: Self = Self([0.0, 0.0]);

    /// `self <= other` in every component.
    pub fn dominated_by(&self, other: &DominanceEmbedding) -> bool {
        self.0[0] <= other.0[0] && self.0[1] <= other.0[1]
    }
}

/// Embedding of a path from the degrees of its vertices.
///
/// Both components are monotone non-decreasing in every degree and share the
/// same denominator for query and data paths, so a query path whose degrees
/// are position-wise bounded by a data path's degrees is dominated by it.
/// Values above 1 (query vertices busier than any data vertex) clamp to 1.
pub fn dominance_embedding(degrees: &[u32], d_max: u32) -> DominanceEmbedding {
    if d_max == 0 || degrees.is_empty() {
        return DominanceEmbedding::ZERO;
    }
    let sum: u64 = degrees.iter().map(|&d| d as u64).sum();
    let min = *degrees.iter().min().unwrap();
    let mean = sum as f64 / (degrees.len() as f64 * d_max as f64);
    let low = min as f64 / d_max as f64;
    DominanceEmbedding([mean.min(1.0), low.min(1.0)])
}

impl PathInstance {
    pub fn embedding(&self, d_max: u32) -> DominanceEmbedding {
        dominance_embedding(&self.degrees, d_max)
    }
}

/// Reversal-canonical label sequence of a path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelKey(Vec<Label>);

impl LabelKey {
    /// Lexicographic minimum of `labels` and its reversal.
    pub fn from_sequence(labels: &[Label]) -> Self {
        let forward_smaller = labels
            .iter()
            .zip(labels.iter().rev())
            .map(|(a, b)| a.cmp(b))
            .find(|o| *o != Ordering::Equal)
            .is_none_or(|o| o == Ordering::Less);
        if forward_smaller {
            Self(labels.to_vec())
        } else {
            Self(labels.iter().rev().copied().collect())
        }
    }

    pub fn labels(&self) -> &[Label] {
        &self.0
    }

    /// Path length in edges.
    pub fn path_len(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    /// Stable 64-bit FNV-1a hash, used for node label signatures.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &l in &self.0 {
            for b in l.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// Bit of the 64-bit node signature this key sets.
    pub fn signature_slot(&self) -> u32 {
        (self.fingerprint() % 64) as u32
    }
}

pub fn label_key(p: &PathInstance, g: &LabeledGraph) -> LabelKey {
    LabelKey::from_sequence(&p.labels(g))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn maximal_and_minimal_degrees() {
        assert_eq!(dominance_embedding(&[4, 4], 4).0, [1.0, 1.0]);
        let q = dominance_embedding(&[1, 1], 4);
        assert_eq!(q.0, [0.25, 0.25]);
        assert!(q.dominated_by(&dominance_embedding(&[4, 4], 4)));
    }

    #[test]
    fn edgeless_graph_embeds_to_zero() {
        assert_eq!(dominance_embedding(&[0, 0], 0), DominanceEmbedding::ZERO);
    }

    #[test]
    fn label_keys_are_reversal_canonical() {
        assert_eq!(LabelKey::from_sequence(&[0, 1, 2]).labels(), &[0, 1, 2]);
        assert_eq!(LabelKey::from_sequence(&[2, 1, 0]).labels(), &[0, 1, 2]);
        assert_eq!(LabelKey::from_sequence(&[0, 1, 0]).labels(), &[0, 1, 0]);
    }

    proptest! {
        #[test]
        fn dominance_is_monotone(
            pairs in prop::collection::vec((0u32..12, 0u32..12), 2..7),
            d_max in 1u32..12,
        ) {
            let lo: Vec<u32> = pairs.iter().map(|&(a, b)| a.min(b)).collect();
            let hi: Vec<u32> = pairs.iter().map(|&(a, b)| a.max(b)).collect();
            let (e_lo, e_hi) = (dominance_embedding(&lo, d_max), dominance_embedding(&hi, d_max));
            prop_assert!(e_lo.dominated_by(&e_hi));
            prop_assert!(e_hi.0.iter().all(|c| (0.0..=1.0).contains(c)));
        }

        #[test]
        fn key_equal_for_reversed_sequences(seq in prop::collection::vec(0u32..4, 1..7)) {
            let rev: Vec<u32> = seq.iter().rev().copied().collect();
            prop_assert_eq!(LabelKey::from_sequence(&seq), LabelKey::from_sequence(&rev));
        }
    }
}
