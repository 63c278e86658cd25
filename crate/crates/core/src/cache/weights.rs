//! Value-model weights: the variance-based initial split and a small
//! residual network trained online with a reward-gated rollback.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{cache_value, Features};

pub const UNIFORM_WEIGHTS: [f64; 4] = [0.25; 4];
/// Snapshots consumed by the initial weight split.
pub const INIT_SNAPSHOTS: usize = 100;
/// Minimum snapshots before training is attempted.
pub const MIN_TRAIN_SNAPSHOTS: usize = 100;
/// Training consumes the latest this many snapshots.
pub const TRAIN_SNAPSHOTS: usize = 500;
pub const BATCH_SIZE: usize = 256;
/// Required held-out reward gain before a candidate replaces the old model.
pub const REWARD_GAIN: f64 = 0.03;
pub const HIDDEN: usize = 32;
/// Simulated training budget and per-step cost.
pub const TRAIN_BUDGET_US: u64 = 5_000_000;
pub const STEP_COST_US: u64 = 20_000;
/// Softmax temperature applied to feature/hit correlations.
pub const ORACLE_TEMPERATURE: f64 = 0.25;
/// Latency charged to a row the evaluation policy keeps cached.
pub const CACHED_LATENCY_MS: f64 = 0.02;
/// Utilization the held-out eviction pass trims to (`T_up = 0.8`).
pub const EVAL_T_LOW: f64 = 0.7;
const LEARNING_RATE: f64 = 0.01;

/// One path observed over one 50-query epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSnapshot {
    pub path_id: u64,
    pub epoch: u64,
    pub features: Features,
    pub mean_degree: f64,
    /// Fraction of this path's accesses served by a cache during the epoch.
    pub hit_rate: f64,
    pub latency_ms: f64,
}

fn normalize(w: [f64; 4]) -> [f64; 4] {
    let s: f64 = w.iter().sum();
    w.map(|x| x / s)
}

/// Initial `(α, β, γ, δ)` from the variance of each feature over the first
/// [`INIT_SNAPSHOTS`] rows; uniform when fewer rows exist or nothing varies.
pub fn init_weights(snapshots: &[FeatureSnapshot]) -> [f64; 4] {
    if snapshots.len() < INIT_SNAPSHOTS {
        return UNIFORM_WEIGHTS;
    }
    let rows = &snapshots[..INIT_SNAPSHOTS];
    let n = rows.len() as f64;
    let mut var = [0.0; 4];
    for (i, v) in var.iter_mut().enumerate() {
        let mean = rows.iter().map(|r| r.features[i]).sum::<f64>() / n;
        *v = rows.iter().map(|r| (r.features[i] - mean).powi(2)).sum::<f64>() / n;
    }
    let total: f64 = var.iter().sum();
    // Rounding leaves constant columns with variance near 1e-33, not 0.
    if total <= 1e-12 {
        return UNIFORM_WEIGHTS;
    }
    weights_from_contributions(var.map(|v| v / total))
}

/// `0.2 + 0.1 · w_i / max w`, normalized.
pub fn weights_from_contributions(w: [f64; 4]) -> [f64; 4] {
    let max = w.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return UNIFORM_WEIGHTS;
    }
    normalize(w.map(|x| 0.2 + 0.1 * x / max))
}

/// Reward mix: hit rate dominates when hits are poor but latency is fine.
pub fn lambda_for(h_prev: f64, l_prev_ms: f64) -> f64 {
    if h_prev < 0.6 && l_prev_ms <= 20.0 {
        0.8
    } else {
        0.4
    }
}

pub fn reward(lambda: f64, h: f64, l: f64, l_prev: f64) -> f64 {
    let lat = if l_prev > 0.0 { l / l_prev } else { 0.0 };
    lambda * h - (1.0 - lambda) * lat
}

pub fn accepts(reward_old: f64, reward_new: f64) -> bool {
    reward_new - reward_old >= REWARD_GAIN - 1e-12
}

fn softmax(z: &[f64; 4]) -> [f64; 4] {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    normalize(z.map(|x| (x - m).exp()))
}

/// 4 → 32 (ReLU) → residual 32 → 4 → softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightModel {
    params: Vec<f64>,
    pub version: u64,
}

const W1: usize = 0;
const B1: usize = W1 + HIDDEN * 4;
const W2: usize = B1 + HIDDEN;
const B2: usize = W2 + HIDDEN * HIDDEN;
const W3: usize = B2 + HIDDEN;
const B3: usize = W3 + 4 * HIDDEN;
const N_PARAMS: usize = B3 + 4;

struct Trace {
    a1: Vec<f64>,
    h: Vec<f64>,
    a2: Vec<f64>,
    r: Vec<f64>,
    p: [f64; 4],
}

impl WeightModel {
    /// A model whose output is exactly `weights` for every input.
    pub fn from_weights(weights: [f64; 4], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; N_PARAMS];
        let s1 = (2.0 / 4.0f64).sqrt();
        let s2 = (2.0 / HIDDEN as f64).sqrt() * 0.5;
        for p in &mut params[W1..B1] {
            *p = rng.gen_range(-s1..s1);
        }
        for p in &mut params[W2..B2] {
            *p = rng.gen_range(-s2..s2);
        }
        for (i, w) in weights.iter().enumerate() {
            params[B3 + i] = w.max(1e-12).ln();
        }
        Self { params, version: 0 }
    }

    fn forward(&self, x: &Features) -> Trace {
        let p = &self.params;
        let mut a1 = vec![0.0; HIDDEN];
        for (j, a) in a1.iter_mut().enumerate() {
            *a = p[B1 + j] + (0..4).map(|i| p[W1 + j * 4 + i] * x[i]).sum::<f64>();
        }
        let h: Vec<f64> = a1.iter().map(|&a| a.max(0.0)).collect();
        let mut a2 = vec![0.0; HIDDEN];
        for (j, a) in a2.iter_mut().enumerate() {
            *a = p[B2 + j] + (0..HIDDEN).map(|i| p[W2 + j * HIDDEN + i] * h[i]).sum::<f64>();
        }
        let r: Vec<f64> = h.iter().zip(&a2).map(|(&hv, &av)| hv + av.max(0.0)).collect();
        let mut z = [0.0; 4];
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = p[B3 + k] + (0..HIDDEN).map(|i| p[W3 + k * HIDDEN + i] * r[i]).sum::<f64>();
        }
        Trace { a1, h, a2, r, p: softmax(&z) }
    }

    /// `(α, β, γ, δ)`, each positive, summing to one.
    pub fn infer(&self, x: &Features) -> [f64; 4] {
        self.forward(x).p
    }

    /// Cross-entropy gradient for one row, accumulated into `g`.
    fn backward(&self, x: &Features, target: &[f64; 4], g: &mut [f64]) -> f64 {
        let p = &self.params;
        let t = self.forward(x);
        let dz: Vec<f64> = (0..4).map(|k| t.p[k] - target[k]).collect();
        let mut dr = vec![0.0; HIDDEN];
        for k in 0..4 {
            g[B3 + k] += dz[k];
            for i in 0..HIDDEN {
                g[W3 + k * HIDDEN + i] += dz[k] * t.r[i];
                dr[i] += p[W3 + k * HIDDEN + i] * dz[k];
            }
        }
        let da2: Vec<f64> = (0..HIDDEN).map(|j| if t.a2[j] > 0.0 { dr[j] } else { 0.0 }).collect();
        let mut dh = dr.clone();
        for j in 0..HIDDEN {
            g[B2 + j] += da2[j];
            for i in 0..HIDDEN {
                g[W2 + j * HIDDEN + i] += da2[j] * t.h[i];
                dh[i] += p[W2 + j * HIDDEN + i] * da2[j];
            }
        }
        for j in 0..HIDDEN {
            let da1 = if t.a1[j] > 0.0 { dh[j] } else { 0.0 };
            g[B1 + j] += da1;
            for i in 0..4 {
                g[W1 + j * 4 + i] += da1 * x[i];
            }
        }
        -(0..4).map(|k| target[k] * t.p[k].max(1e-300).ln()).sum::<f64>()
    }

    /// Adam on cross-entropy towards `target` for every row. Returns the
    /// number of steps taken.
    pub fn fit(&mut self, xs: &[Features], target: &[f64; 4], steps: usize, seed: u64) -> usize {
        if xs.is_empty() {
            return 0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let mut m = vec![0.0; N_PARAMS];
        let mut v = vec![0.0; N_PARAMS];
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut cursor = xs.len();
        for step in 1..=steps {
            let mut g = vec![0.0; N_PARAMS];
            let mut taken = 0;
            while taken < BATCH_SIZE.min(xs.len()) {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                self.backward(&xs[order[cursor]], target, &mut g);
                cursor += 1;
                taken += 1;
            }
            let scale = 1.0 / taken as f64;
            let c1 = 1.0 - b1_pow(b1, step);
            let c2 = 1.0 - b1_pow(b2, step);
            for i in 0..N_PARAMS {
                let gi = g[i] * scale;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                self.params[i] -= LEARNING_RATE * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        steps
    }
}

fn b1_pow(b: f64, step: usize) -> f64 {
    b.powi(step as i32)
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Softmax of each feature's correlation with the observed hit rate.
pub fn oracle_target(rows: &[FeatureSnapshot]) -> [f64; 4] {
    let hits: Vec<f64> = rows.iter().map(|r| r.hit_rate).collect();
    let mut c = [0.0; 4];
    for (i, ci) in c.iter_mut().enumerate() {
        let f: Vec<f64> = rows.iter().map(|r| r.features[i]).collect();
        *ci = pearson(&f, &hits) / ORACLE_TEMPERATURE;
    }
    softmax(&c)
}

/// `(H, L)` after one tiered eviction pass over `rows` treated as a full
/// cache: every row below `0.2·maxV` leaves, then rows by ascending value
/// until `T_low` of them remain. `H` is the share of observed hits still
/// cached; `L` the mean latency with cached rows served at
/// [`CACHED_LATENCY_MS`].
pub fn evaluate_policy(rows: &[FeatureSnapshot], weights: &dyn Fn(&Features) -> [f64; 4]) -> (f64, f64) {
    if rows.is_empty() {
        return (0.0, 0.0);
    }
    let mut scored: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (cache_value(&r.features, &weights(&r.features), r.mean_degree), i))
        .collect();
    let max_v = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let keep = ((EVAL_T_LOW * rows.len() as f64).floor() as usize).max(1);
    let mut cached = vec![false; rows.len()];
    for &(v, i) in scored.iter().take(keep) {
        cached[i] = v >= 0.2 * max_v;
    }
    let total_hits: f64 = rows.iter().map(|r| r.hit_rate).sum();
    let kept_hits: f64 = rows.iter().zip(&cached).filter(|(_, &c)| c).map(|(r, _)| r.hit_rate).sum();
    let h = if total_hits > 0.0 { kept_hits / total_hits } else { 0.0 };
    let l = rows
        .iter()
        .zip(&cached)
        .map(|(r, &c)| if c { CACHED_LATENCY_MS } else { r.latency_ms })
        .sum::<f64>()
        / rows.len() as f64;
    (h, l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub accepted: bool,
    pub lambda: f64,
    pub reward_old: f64,
    pub reward_new: f64,
    pub steps: usize,
    pub simulated_us: u64,
}

/// Trains a candidate on the latest snapshots and keeps it only when its
/// held-out reward beats the old model by [`REWARD_GAIN`].
pub fn incremental_train(
    snapshots: &[FeatureSnapshot],
    h_prev: f64,
    l_prev_ms: f64,
    old: &WeightModel,
    seed: u64,
) -> (WeightModel, TrainOutcome) {
    let lambda = lambda_for(h_prev, l_prev_ms);
    if snapshots.len() < MIN_TRAIN_SNAPSHOTS {
        let out = TrainOutcome { accepted: false, lambda, reward_old: 0.0, reward_new: 0.0, steps: 0, simulated_us: 0 };
        return (old.clone(), out);
    }
    let mut rows: Vec<FeatureSnapshot> = snapshots[snapshots.len().saturating_sub(TRAIN_SNAPSHOTS)..].to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    let held_n = (rows.len() / 5).max(1);
    let (held, train) = rows.split_at(held_n);
    let target = oracle_target(train);
    let mut candidate = old.clone();
    let xs: Vec<Features> = train.iter().map(|r| r.features).collect();
    let steps = (TRAIN_BUDGET_US / STEP_COST_US) as usize;
    candidate.fit(&xs, &target, steps, seed ^ 0x5eed);

    let score = |m: &WeightModel| {
        let (h, l) = evaluate_policy(held, &|f| m.infer(f));
        reward(lambda, h, l, l_prev_ms)
    };
    let (reward_old, reward_new) = (score(old), score(&candidate));
    let accepted = accepts(reward_old, reward_new);
    let out = TrainOutcome {
        accepted,
        lambda,
        reward_old,
        reward_new,
        steps,
        simulated_us: steps as u64 * STEP_COST_US,
    };
    if accepted {
        candidate.version = old.version + 1;
        (candidate, out)
    } else {
        (old.clone(), out)
    }
}
