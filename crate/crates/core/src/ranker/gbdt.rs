//! Gradient-boosted regression trees with squared loss and exact splits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_TREES: usize = 50;
pub const MAX_TREES: usize = 300;
pub const MAX_DEPTH: usize = 4;
pub const LEARNING_RATE: f64 = 0.1;
pub const MIN_TRAIN_SAMPLES: usize = 50;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GbdtError {
    #[error("need at least {MIN_TRAIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("feature rows have inconsistent widths")]
    RaggedRows,
    #[error("num_trees {0} outside {MIN_TREES}..={MAX_TREES}")]
    TreeCount(usize),
    #[error("non-finite or negative sample weight")]
    Weight,
}

/// `min(50 + ⌊n/1000⌋, 300)`.
pub fn adaptive_tree_count(n_samples: usize) -> usize {
    (MIN_TREES + n_samples / 1000).min(MAX_TREES)
}

/// Flattened tree node. Leaves have `feature = None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            match n.feature {
                None => return n.value,
                Some(f) => i = if x[f] <= n.threshold { n.left } else { n.right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            let n = &t.nodes[i];
            match n.feature {
                None => 0,
                Some(_) => 1 + go(t, n.left).max(go(t, n.right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl GbdtModel {
    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Squared-loss boosting. Deterministic: exact splits scan features in
    /// index order and break ties towards the lower feature and threshold.
    pub fn train(xs: &[Vec<f64>], y: &[f64], w: &[f64], num_trees: usize) -> Result<Self, GbdtError> {
        let n = xs.len();
        if n < MIN_TRAIN_SAMPLES || y.len() != n || w.len() != n {
            return Err(GbdtError::TooFewSamples(n.min(y.len()).min(w.len())));
        }
        if !(MIN_TREES..=MAX_TREES).contains(&num_trees) {
            return Err(GbdtError::TreeCount(num_trees));
        }
        let width = xs[0].len();
        if xs.iter().any(|x| x.len() != width) {
            return Err(GbdtError::RaggedRows);
        }
        if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(GbdtError::Weight);
        }
        let wsum: f64 = w.iter().sum();
        let base = if wsum > 0.0 {
            y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum
        } else {
            0.0
        };
        // Per-feature sample order, computed once.
        let sorted: Vec<Vec<usize>> = (0..width)
            .map(|f| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| xs[a][f].total_cmp(&xs[b][f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        let mut pred = vec![base; n];
        let mut trees = Vec::with_capacity(num_trees);
        for _ in 0..num_trees {
            let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, p)| a - p).collect();
            let mut b = Builder {
                xs,
                resid: &resid,
                w,
                sorted: &sorted,
                nodes: Vec::new(),
            };
            let mut member = vec![true; n];
            b.grow(&mut member, 0);
            let tree = RegressionTree { nodes: b.nodes };
            for (p, x) in pred.iter_mut().zip(xs) {
                *p += LEARNING_RATE * tree.predict(x);
            }
            trees.push(tree);
        }
        Ok(Self {
            base,
            learning_rate: LEARNING_RATE,
            trees,
        })
    }
}

struct Builder<'a> {
    xs: &'a [Vec<f64>],
    resid: &'a [f64],
    w: &'a [f64],
    sorted: &'a [Vec<usize>],
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn grow(&mut self, member: &mut [bool], depth: usize) -> usize {
        let (mut sw, mut swr) = (0.0, 0.0);
        for (i, _) in member.iter().enumerate().filter(|(_, &m)| m) {
            sw += self.w[i];
            swr += self.w[i] * self.resid[i];
        }
        let value = if sw > 0.0 { swr / sw } else { 0.0 };
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            feature: None,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
        });
        if depth >= MAX_DEPTH || sw <= 0.0 {
            return id;
        }
        let Some((f, thr)) = self.best_split(member, sw, swr) else {
            return id;
        };
        let mut left: Vec<bool> = member.to_vec();
        let mut right: Vec<bool> = member.to_vec();
        for i in 0..member.len() {
            if member[i] {
                let goes_left = self.xs[i][f] <= thr;
                left[i] = goes_left;
                right[i] = !goes_left;
            }
        }
        let l = self.grow(&mut left, depth + 1);
        let r = self.grow(&mut right, depth + 1);
        let node = &mut self.nodes[id];
        node.feature = Some(f);
        node.threshold = thr;
        node.left = l;
        node.right = r;
        id
    }

    fn best_split(&self, member: &[bool], sw: f64, swr: f64) -> Option<(usize, f64)> {
        let parent = swr * swr / sw;
        let mut best: Option<(f64, usize, f64)> = None;
        for (f, order) in self.sorted.iter().enumerate() {
            let (mut lw, mut lwr) = (0.0, 0.0);
            let idx: Vec<usize> = order.iter().copied().filter(|&i| member[i]).collect();
            for k in 0..idx.len().saturating_sub(1) {
                let i = idx[k];
                lw += self.w[i];
                lwr += self.w[i] * self.resid[i];
                let (a, b) = (self.xs[i][f], self.xs[idx[k + 1]][f]);
                if a == b {
                    continue;
                }
                let rw = sw - lw;
                if lw <= 0.0 || rw <= 1e-15 {
                    continue;
                }
                let rwr = swr - lwr;
                let gain = lwr * lwr / lw + rwr * rwr / rw - parent;
                if gain > MIN_GAIN && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, a + (b - a) / 2.0));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn tree_counts() {
        assert_eq!(adaptive_tree_count(0), 50);
        assert_eq!(adaptive_tree_count(1000), 51);
        assert_eq!(adaptive_tree_count(300_000), 300);
        assert_eq!(adaptive_tree_count(999), 50);
    }

    #[test]
    fn constant_target() {
        let xs: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64]).collect();
        let m = GbdtModel::train(&xs, &[2.5; 60], &[1.0; 60], 50).unwrap();
        for x in &xs {
            assert!((m.predict(x) - 2.5).abs() < 1e-9);
        }
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn step_function_beats_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Vec<f64>> = (0..250).map(|_| vec![rng.gen_range(0.0..1.0)]).collect();
        let y: Vec<f64> = xs.iter().map(|x| if x[0] < 0.4 { 1.0 } else { 3.0 }).collect();
        let m = GbdtModel::train(&xs[..200], &y[..200], &[1.0; 200], 50).unwrap();
        let test = &y[200..];
        let mean = test.iter().sum::<f64>() / test.len() as f64;
        let var = test.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / test.len() as f64;
        let mse = xs[200..]
            .iter()
            .zip(test)
            .map(|(x, v)| (m.predict(x) - v).powi(2))
            .sum::<f64>()
            / test.len() as f64;
        assert!(mse < var, "mse {mse} variance {var}");
        assert!(m.trees.iter().all(|t| t.depth() <= MAX_DEPTH));
    }

    #[test]
    fn duplicated_samples_give_same_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let y: Vec<f64> = xs.iter().map(|x| x[0] * 2.0 + (x[1] > 0.5) as u8 as f64).collect();
        let a = GbdtModel::train(&xs, &y, &[1.0; 80], 50).unwrap();
        let xs2: Vec<Vec<f64>> = xs.iter().chain(&xs).cloned().collect();
        let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
        let b = GbdtModel::train(&xs2, &y2, &[1.0; 160], 50).unwrap();
        for x in &xs {
            assert!((a.predict(x) - b.predict(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        assert_eq!(GbdtModel::train(&xs, &[0.0; 10], &[1.0; 10], 50), Err(GbdtError::TooFewSamples(10)));
        let xs: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64]).collect();
        assert_eq!(GbdtModel::train(&xs, &[0.0; 60], &[1.0; 60], 400), Err(GbdtError::TreeCount(400)));
    }

    #[test]
    fn serializes_round_trip() {
        let xs: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let y: Vec<f64> = xs.iter().map(|x| x[0].sqrt() + x[1]).collect();
        let m = GbdtModel::train(&xs, &y, &[1.0; 60], 50).unwrap();
        let back: GbdtModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
