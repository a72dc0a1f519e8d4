//! Histogram-based CART regression trees.
//!
//! Features are discretized once into at most 255 bins per column. A column
//! with few distinct values keeps one bin per value (so splits are exactly the
//! midpoints an exhaustive search would consider); wider columns use quantile
//! cut points. Splits send `x <= threshold` to the left child and are chosen by
//! the largest decrease in summed squared error.

mod boosting;
mod forest;

pub use boosting::{BoostedClassifier, BoostingParams};
pub use forest::{Forest, ForestParams, MaxFeatures};

use ndarray::ArrayView2;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("training set is empty")]
    Empty,
    #[error("feature matrix has {rows} rows but {targets} targets")]
    Shape { rows: usize, targets: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("expected {expected} features, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error("invalid hyperparameter: {0}")]
    Params(String),
}

/// Column-major binned copy of a feature matrix.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    n_rows: usize,
    bins: Vec<Vec<u8>>,
    /// Upper edge of every bin except the last, per feature.
    cuts: Vec<Vec<f64>>,
}

impl BinnedMatrix {
    pub fn new(x: ArrayView2<f64>, max_bins: usize) -> Result<Self, TreeError> {
        if !(2..=256).contains(&max_bins) {
            return Err(TreeError::Params(format!("max_bins {max_bins} outside [2, 256]")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(TreeError::NonFinite("features"));
        }
        let mut bins = Vec::with_capacity(x.ncols());
        let mut cuts = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mut sorted: Vec<f64> = col.to_vec();
            sorted.sort_by(f64::total_cmp);
            let mut uniq = sorted.clone();
            uniq.dedup();
            let c: Vec<f64> = if uniq.len() <= max_bins {
                uniq.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
            } else {
                let n = sorted.len();
                let mut c: Vec<f64> = (1..max_bins)
                    .map(|k| sorted[(k * n / max_bins).min(n - 1)])
                    .collect();
                c.dedup();
                // A cut at the maximum would leave an empty right side.
                if c.last() == sorted.last() {
                    c.pop();
                }
                c
            };
            bins.push(col.iter().map(|&v| c.partition_point(|&cut| cut < v) as u8).collect());
            cuts.push(c);
        }
        Ok(Self { n_rows: x.nrows(), bins, cuts })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.bins.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    pub fn bin(&self, row: usize, feature: usize) -> u8 {
        self.bins[feature][row]
    }

    pub fn cut(&self, feature: usize, bin: usize) -> f64 {
        self.cuts[feature][bin]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Number of features examined per split.
    pub max_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
        /// Decrease of summed squared error produced by this split.
        gain: f64,
    },
}

/// Hot traversal fields of one node. For a leaf `feature == LEAF` and `value`
/// is the prediction; for a split it is the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct PackedNode {
    value: f64,
    feature: u32,
    left: u32,
    right: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<PackedNode>,
    n_samples: Vec<u32>,
    gain: Vec<f64>,
    n_features: usize,
}

const LEAF: u32 = u32::MAX;

struct Builder<'a, R> {
    data: &'a BinnedMatrix,
    params: TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
    hist: Box<Histograms>,
}

/// Interleaved partial histograms; consecutive rows land in different copies
/// so repeated hits on one bin do not serialize on a single counter.
struct Histograms {
    count: [[u32; 256]; HIST_WAYS],
    sum: [[f64; 256]; HIST_WAYS],
}

const HIST_WAYS: usize = 4;

struct BestSplit {
    feature: usize,
    bin: usize,
    gain: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn leaf(&mut self, ws: &[u32], wys: &[f64]) -> usize {
        let n: u32 = ws.iter().sum();
        let sum: f64 = wys.iter().sum();
        self.nodes.push(Node::Leaf { value: sum / n as f64, n_samples: n as usize });
        self.nodes.len() - 1
    }

    /// Row `rows[i]` occurs `ws[i]` times with weighted target `wys[i]`.
    fn find_split(&mut self, rows: &[u32], ws: &[u32], wys: &[f64], n: usize) -> Option<BestSplit> {
        let total: f64 = wys.iter().sum();
        let parent = total * total / n as f64;
        let n_features = self.data.n_features();
        let k = self.params.max_features.clamp(1, n_features);
        let mut features: Vec<usize> = sample_indices(self.rng, n_features, k).into_vec();
        features.sort_unstable();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let ways = if rows.len() >= 256 { HIST_WAYS } else { 1 };
        let mut best: Option<BestSplit> = None;
        for f in features {
            let nb = self.data.n_bins(f);
            if nb < 2 {
                continue;
            }
            let col = &self.data.bins[f];
            if rows.len() * 4 < nb {
                // Few rows: scan occupied bins only.
                let mut entries: Vec<(u8, u32, f64)> =
                    rows.iter().zip(ws).zip(wys).map(|((&r, &c), &y)| (col[r as usize], c, y)).collect();
                entries.sort_unstable_by_key(|e| e.0);
                let (mut nl, mut sl) = (0usize, 0.0);
                let mut i = 0;
                while i < entries.len() {
                    let bin = entries[i].0;
                    while i < entries.len() && entries[i].0 == bin {
                        nl += entries[i].1 as usize;
                        sl += entries[i].2;
                        i += 1;
                    }
                    if i == entries.len() {
                        break;
                    }
                    let nr = n - nl;
                    if nl < min_leaf {
                        continue;
                    }
                    if nr < min_leaf {
                        break;
                    }
                    let sr = total - sl;
                    let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
                    if gain > 1e-12 * (1.0 + parent.abs()) && best.as_ref().is_none_or(|bs| gain > bs.gain) {
                        best = Some(BestSplit { feature: f, bin: bin as usize, gain });
                    }
                }
                continue;
            }
            let h = &mut *self.hist;
            for w in 0..ways {
                h.count[w][..nb].fill(0);
                h.sum[w][..nb].fill(0.0);
            }
            if ways == HIST_WAYS {
                let mut rc = rows.chunks_exact(HIST_WAYS);
                let mut wc = ws.chunks_exact(HIST_WAYS);
                let mut yc = wys.chunks_exact(HIST_WAYS);
                for ((r4, w4), y4) in (&mut rc).zip(&mut wc).zip(&mut yc) {
                    for w in 0..HIST_WAYS {
                        let b = col[r4[w] as usize] as usize;
                        h.count[w][b] += w4[w];
                        h.sum[w][b] += y4[w];
                    }
                }
                for ((&r, &c), &y) in rc.remainder().iter().zip(wc.remainder()).zip(yc.remainder()) {
                    let b = col[r as usize] as usize;
                    h.count[0][b] += c;
                    h.sum[0][b] += y;
                }
                for w in 1..HIST_WAYS {
                    for b in 0..nb {
                        h.count[0][b] += h.count[w][b];
                        h.sum[0][b] += h.sum[w][b];
                    }
                }
            } else {
                for ((&r, &c), &y) in rows.iter().zip(ws).zip(wys) {
                    let b = col[r as usize] as usize;
                    h.count[0][b] += c;
                    h.sum[0][b] += y;
                }
            }
            let (cnt, sm) = (&h.count[0], &h.sum[0]);
            let (mut nl, mut sl) = (0usize, 0.0);
            for b in 0..nb - 1 {
                if cnt[b] == 0 {
                    // Same partition as the previous bin.
                    continue;
                }
                nl += cnt[b] as usize;
                sl += sm[b];
                let nr = n - nl;
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let sr = total - sl;
                let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
                if gain > 1e-12 * (1.0 + parent.abs()) && best.as_ref().is_none_or(|bs| gain > bs.gain) {
                    best = Some(BestSplit { feature: f, bin: b, gain });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: &mut [u32], ws: &mut [u32], wys: &mut [f64], depth: usize) -> usize {
        let n = ws.iter().sum::<u32>() as usize;
        if depth >= self.params.max_depth || n < self.params.min_samples_split.max(2) || rows.len() < 2 {
            return self.leaf(ws, wys);
        }
        let Some(split) = self.find_split(rows, ws, wys, n) else {
            return self.leaf(ws, wys);
        };
        let col = &self.data.bins[split.feature];
        let mut mid = 0;
        for i in 0..rows.len() {
            if col[rows[i] as usize] as usize <= split.bin {
                rows.swap(i, mid);
                ws.swap(i, mid);
                wys.swap(i, mid);
                mid += 1;
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0, n_samples: n });
        let (lrows, rrows) = rows.split_at_mut(mid);
        let (lws, rws) = ws.split_at_mut(mid);
        let (lys, rys) = wys.split_at_mut(mid);
        let left = self.grow(lrows, lws, lys, depth + 1);
        let right = self.grow(rrows, rws, rys, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: self.data.cut(split.feature, split.bin),
            left,
            right,
            n_samples: n,
            gain: split.gain,
        };
        id
    }
}

impl RegressionTree {
    /// Fits a tree on the listed rows; duplicated indices act as bootstrap
    /// multiplicities.
    pub fn fit<R: Rng>(
        data: &BinnedMatrix,
        targets: &[f64],
        rows: &[u32],
        params: TreeParams,
        rng: &mut R,
    ) -> Result<Self, TreeError> {
        if rows.is_empty() {
            return Err(TreeError::Empty);
        }
        if targets.len() != data.n_rows() {
            return Err(TreeError::Shape { rows: data.n_rows(), targets: targets.len() });
        }
        // Collapse duplicates into multiplicities, keeping first-seen order.
        let mut mult = vec![0u32; data.n_rows()];
        let mut uniq: Vec<u32> = Vec::with_capacity(rows.len());
        for &r in rows {
            if mult[r as usize] == 0 {
                uniq.push(r);
            }
            mult[r as usize] += 1;
        }
        uniq.sort_unstable();
        let mut ws: Vec<u32> = uniq.iter().map(|&r| mult[r as usize]).collect();
        let mut wys: Vec<f64> = uniq.iter().zip(&ws).map(|(&r, &w)| targets[r as usize] * w as f64).collect();
        let mut rows = uniq;
        let mut b = Builder {
            data,
            params,
            rng,
            nodes: Vec::new(),
            hist: Box::new(Histograms { count: [[0; 256]; HIST_WAYS], sum: [[0.0; 256]; HIST_WAYS] }),
        };
        b.grow(&mut rows, &mut ws, &mut wys, 0);
        let mut t = Self {
            nodes: Vec::with_capacity(b.nodes.len()),
            n_samples: Vec::with_capacity(b.nodes.len()),
            gain: Vec::with_capacity(b.nodes.len()),
            n_features: data.n_features(),
        };
        for node in b.nodes {
            match node {
                Node::Leaf { value, n_samples } => {
                    t.nodes.push(PackedNode { value, feature: LEAF, left: 0, right: 0 });
                    t.n_samples.push(n_samples as u32);
                    t.gain.push(0.0);
                }
                Node::Split { feature, threshold, left, right, n_samples, gain } => {
                    t.nodes.push(PackedNode {
                        value: threshold,
                        feature: feature as u32,
                        left: left as u32,
                        right: right as u32,
                    });
                    t.n_samples.push(n_samples as u32);
                    t.gain.push(gain);
                }
            }
        }
        Ok(t)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.nodes[i].feature == LEAF
    }

    pub fn node(&self, i: usize) -> Node {
        let p = self.nodes[i];
        if p.feature == LEAF {
            Node::Leaf { value: p.value, n_samples: self.n_samples[i] as usize }
        } else {
            Node::Split {
                feature: p.feature as usize,
                threshold: p.value,
                left: p.left as usize,
                right: p.right as usize,
                n_samples: self.n_samples[i] as usize,
                gain: self.gain[i],
            }
        }
    }

    pub fn nodes(&self) -> Vec<Node> {
        (0..self.n_nodes()).map(|i| self.node(i)).collect()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Index of the leaf reached by `x`.
    pub fn apply(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            let p = &self.nodes[i];
            if p.feature == LEAF {
                return i;
            }
            i = if x[p.feature as usize] <= p.value { p.left } else { p.right } as usize;
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.nodes[self.apply(x)].value
    }

    /// Adds this tree's prediction for every row `[context ‖ one-hot(a)]`,
    /// `a < out.len()`, to `out[a]`. Actions share one traversal until a
    /// split on their own indicator column peels them off.
    pub fn accumulate_one_hot(&self, context: &[f64], out: &mut [f64]) {
        let d = context.len();
        let n_actions = out.len();
        if n_actions > 64 {
            let mut row = context.to_vec();
            row.resize(d + n_actions, 0.0);
            for a in 0..n_actions {
                row[d + a] = 1.0;
                out[a] += self.predict_row(&row);
                row[d + a] = 0.0;
            }
            return;
        }
        let mut shared: u64 = if n_actions == 64 { u64::MAX } else { (1u64 << n_actions) - 1 };
        let mut i = 0;
        while shared != 0 {
            let p = &self.nodes[i];
            if p.feature == LEAF {
                while shared != 0 {
                    let a = shared.trailing_zeros() as usize;
                    out[a] += p.value;
                    shared &= shared - 1;
                }
                return;
            }
            let f = p.feature as usize;
            if f < d {
                i = if context[f] <= p.value { p.left } else { p.right } as usize;
                continue;
            }
            let k = f - d;
            let zero_child = if 0.0 <= p.value { p.left } else { p.right } as usize;
            let one_child = if 1.0 <= p.value { p.left } else { p.right } as usize;
            if k < n_actions && shared & (1 << k) != 0 && one_child != zero_child {
                shared &= !(1 << k);
                out[k] += self.descend_single(one_child, context, k);
            }
            i = zero_child;
        }
    }

    fn descend_single(&self, mut i: usize, context: &[f64], action: usize) -> f64 {
        let d = context.len();
        loop {
            let p = &self.nodes[i];
            if p.feature == LEAF {
                return p.value;
            }
            let f = p.feature as usize;
            let x = if f < d { context[f] } else if f - d == action { 1.0 } else { 0.0 };
            i = if x <= p.value { p.left } else { p.right } as usize;
        }
    }

    pub fn leaf_value(&self, node: usize) -> f64 {
        self.nodes[node].value
    }

    /// Overwrites the value of leaf `node`.
    pub fn set_leaf_value(&mut self, node: usize, new_value: f64) {
        if self.is_leaf(node) {
            self.nodes[node].value = new_value;
        }
    }

    /// Unnormalized impurity decrease attributed to each feature.
    pub fn raw_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for (p, g) in self.nodes.iter().zip(&self.gain) {
            if p.feature != LEAF {
                imp[p.feature as usize] += g;
            }
        }
        imp
    }
}
