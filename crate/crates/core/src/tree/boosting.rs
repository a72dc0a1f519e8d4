use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{BinnedMatrix, RegressionTree, TreeError, TreeParams};
use crate::rng::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub max_bins: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self { n_estimators: 100, max_depth: 3, learning_rate: 0.1, min_samples_leaf: 1, max_bins: 64 }
    }
}

/// Gradient-boosted trees for binary targets under logistic loss. Each round
/// fits a regression tree to the residuals `y - p` and replaces its leaf
/// values with one Newton step `Σ(y - p) / Σ p(1 - p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedClassifier {
    init: f64,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
    n_features: usize,
}

fn sigmoid(z: f64) -> f64 {
    crate::bandit::sigmoid(z)
}

impl BoostedClassifier {
    /// `y` must hold 0/1 labels with both classes present.
    pub fn fit(x: ArrayView2<f64>, y: &[f64], params: BoostingParams, seed: u64) -> Result<Self, TreeError> {
        let n = x.nrows();
        if n == 0 {
            return Err(TreeError::Empty);
        }
        if y.len() != n {
            return Err(TreeError::Shape { rows: n, targets: y.len() });
        }
        let mean = y.iter().sum::<f64>() / n as f64;
        if !(mean > 0.0 && mean < 1.0) {
            return Err(TreeError::Params("boosting needs both classes".into()));
        }
        let data = BinnedMatrix::new(x, params.max_bins)?;
        let rows_raw: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let init = (mean / (1.0 - mean)).ln();
        let mut f = vec![init; n];
        let mut trees = Vec::with_capacity(params.n_estimators);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_split: 2,
            min_samples_leaf: params.min_samples_leaf,
            max_features: x.ncols(),
        };
        let all: Vec<u32> = (0..n as u32).collect();
        let mut rng = stream(seed, &[rng::TAG_MODEL]);
        let mut grad = vec![0.0; n];
        for _ in 0..params.n_estimators {
            let p: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
            for i in 0..n {
                grad[i] = y[i] - p[i];
            }
            let mut tree = RegressionTree::fit(&data, &grad, &all, tree_params, &mut rng)?;
            let leaves: Vec<usize> = rows_raw.iter().map(|r| tree.apply(r)).collect();
            let n_nodes = tree.n_nodes();
            let mut num = vec![0.0; n_nodes];
            let mut den = vec![0.0; n_nodes];
            for i in 0..n {
                num[leaves[i]] += grad[i];
                den[leaves[i]] += p[i] * (1.0 - p[i]);
            }
            for node in 0..n_nodes {
                if tree.is_leaf(node) {
                    let step = if den[node] > 1e-12 { num[node] / den[node] } else { 0.0 };
                    tree.set_leaf_value(node, step);
                }
            }
            for i in 0..n {
                f[i] += params.learning_rate * tree.leaf_value(leaves[i]);
            }
            trees.push(tree);
        }
        Ok(Self { init, learning_rate: params.learning_rate, trees, n_features: x.ncols() })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn decision_function(&self, x: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }

    /// Probabilities for the rows `[context ‖ one-hot(a)]` of every action.
    pub fn predict_proba_one_hot(&self, context: &[f64], n_actions: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_actions];
        for t in &self.trees {
            t.accumulate_one_hot(context, &mut out);
        }
        out.iter().map(|s| sigmoid(self.init + self.learning_rate * s)).collect()
    }

    pub fn predict_proba_row(&self, x: ArrayView1<f64>) -> f64 {
        sigmoid(self.decision_function(&x.to_vec()))
    }
}
