use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BinnedMatrix, RegressionTree, TreeError, TreeParams};
use crate::rng::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MaxFeatures {
    All,
    Sqrt,
    /// Fraction in (0, 1]; rounded up to a feature count.
    Fraction(f64),
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => (n_features as f64).sqrt().ceil() as usize,
            MaxFeatures::Fraction(f) => (f * n_features as f64).ceil() as usize,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Bootstrap sample size as a fraction of the training rows.
    pub max_samples: f64,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub max_bins: usize,
    /// Compute the out-of-bag R² after fitting.
    pub oob_score: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 100,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_samples: 1.0,
            max_features: MaxFeatures::All,
            bootstrap: true,
            max_bins: 255,
            oob_score: true,
        }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<(), TreeError> {
        let bad = |m: String| Err(TreeError::Params(m));
        if self.n_estimators == 0 {
            return bad("n_estimators must be positive".into());
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive".into());
        }
        if !(self.max_samples > 0.0 && self.max_samples <= 1.0) {
            return bad(format!("max_samples {} outside (0, 1]", self.max_samples));
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("max_features {f} outside (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Bagged regression trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<RegressionTree>,
    n_features: usize,
    params: ForestParams,
    oob_score: Option<f64>,
}

impl Forest {
    pub fn fit(x: ArrayView2<f64>, y: &[f64], params: ForestParams, seed: u64) -> Result<Self, TreeError> {
        params.validate()?;
        let n = x.nrows();
        if n == 0 {
            return Err(TreeError::Empty);
        }
        if y.len() != n {
            return Err(TreeError::Shape { rows: n, targets: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(TreeError::NonFinite("targets"));
        }
        let data = BinnedMatrix::new(x, params.max_bins)?;
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_split: params.min_samples_split,
            min_samples_leaf: params.min_samples_leaf,
            max_features: params.max_features.count(x.ncols()),
        };
        let draw = ((params.max_samples * n as f64).ceil() as usize).max(1);
        let fitted: Vec<(RegressionTree, Vec<bool>)> = (0..params.n_estimators)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, &[rng::TAG_MODEL, i as u64]);
                let mut in_bag = vec![!params.bootstrap; n];
                let rows: Vec<u32> = if params.bootstrap {
                    (0..draw)
                        .map(|_| {
                            let r = rng.random_range(0..n);
                            in_bag[r] = true;
                            r as u32
                        })
                        .collect()
                } else {
                    (0..n as u32).collect()
                };
                let tree = RegressionTree::fit(&data, y, &rows, tree_params, &mut rng)?;
                Ok((tree, in_bag))
            })
            .collect::<Result<_, TreeError>>()?;

        let oob_score = if params.bootstrap && params.oob_score { oob_r2(x, y, &fitted) } else { None };
        Ok(Self {
            trees: fitted.into_iter().map(|(t, _)| t).collect(),
            n_features: x.ncols(),
            params,
            oob_score,
        })
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Coefficient of determination on out-of-bag predictions, when at least
    /// one row was left out of some tree's bootstrap sample.
    pub fn oob_score(&self) -> Option<f64> {
        self.oob_score
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> Result<f64, TreeError> {
        if x.len() != self.n_features {
            return Err(TreeError::FeatureCount { expected: self.n_features, got: x.len() });
        }
        let owned;
        let row = match x.as_slice() {
            Some(s) => s,
            None => {
                owned = x.to_vec();
                &owned
            }
        };
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    /// Predictions for the rows `[context ‖ one-hot(a)]` of every action.
    pub fn predict_one_hot(&self, context: &[f64], n_actions: usize) -> Result<Vec<f64>, TreeError> {
        if context.len() + n_actions != self.n_features {
            return Err(TreeError::FeatureCount { expected: self.n_features, got: context.len() + n_actions });
        }
        let mut out = vec![0.0; n_actions];
        for t in &self.trees {
            t.accumulate_one_hot(context, &mut out);
        }
        let k = self.trees.len() as f64;
        out.iter_mut().for_each(|v| *v /= k);
        Ok(out)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, TreeError> {
        x.rows().into_iter().map(|r| self.predict_row(r)).collect()
    }

    /// Mean decrease in impurity per input column: normalized within each tree
    /// that has at least one split, averaged, then renormalized.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.n_features];
        let mut used = 0usize;
        for tree in &self.trees {
            let imp = tree.raw_importances();
            let s: f64 = imp.iter().sum();
            if s > 0.0 {
                used += 1;
                for (t, v) in total.iter_mut().zip(imp) {
                    *t += v / s;
                }
            }
        }
        if used == 0 {
            return total;
        }
        let s: f64 = total.iter().sum();
        total.iter_mut().for_each(|v| *v /= s);
        total
    }
}

fn oob_r2(x: ArrayView2<f64>, y: &[f64], fitted: &[(RegressionTree, Vec<bool>)]) -> Option<f64> {
    let n = y.len();
    let mut sum = vec![0.0; n];
    let mut cnt = vec![0usize; n];
    for r in 0..n {
        let row = x.row(r).to_vec();
        for (tree, in_bag) in fitted {
            if !in_bag[r] {
                sum[r] += tree.predict_row(&row);
                cnt[r] += 1;
            }
        }
    }
    let idx: Vec<usize> = (0..n).filter(|&r| cnt[r] > 0).collect();
    if idx.is_empty() {
        return None;
    }
    let mean = idx.iter().map(|&r| y[r]).sum::<f64>() / idx.len() as f64;
    let ss_tot: f64 = idx.iter().map(|&r| (y[r] - mean).powi(2)).sum();
    let ss_res: f64 = idx.iter().map(|&r| (y[r] - sum[r] / cnt[r] as f64).powi(2)).sum();
    Some(if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    })
}
