//! Reward predictors q̂(x, a) with 3-fold cross-fitting.
//!
//! Every learner sees `[context ‖ one-hot(action)]` and predicts the
//! probability of reward 1. When a training split holds a single reward value
//! the learner is replaced by that constant.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{sigmoid, OpeTask};
use crate::rng::{self, stream};
use crate::tree::{BoostedClassifier, BoostingParams, Forest, ForestParams, MaxFeatures, TreeError};

pub const N_FOLDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RewardModelKind {
    ForestClassifier,
    LogisticRegression,
    GradientBoostedClassifier,
}

impl RewardModelKind {
    pub const ALL: [RewardModelKind; 3] = [
        RewardModelKind::ForestClassifier,
        RewardModelKind::LogisticRegression,
        RewardModelKind::GradientBoostedClassifier,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            RewardModelKind::ForestClassifier => "rf",
            RewardModelKind::LogisticRegression => "lr",
            RewardModelKind::GradientBoostedClassifier => "gbdt",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardModelError {
    #[error("cross-fitting needs at least {N_FOLDS} rounds, got {0}")]
    TooFewRounds(usize),
    #[error("reward model has not been fitted")]
    Unfitted,
    #[error("expected context of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("action {action} out of range for {n_actions} actions")]
    Action { action: usize, n_actions: usize },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticParams {
    pub iterations: usize,
    pub step: f64,
    pub l2: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { iterations: 500, step: 0.1, l2: 1e-4 }
    }
}

/// Binary logistic regression on `[x ‖ one-hot(a)]`, fitted by full-batch
/// gradient descent on mean log-loss plus `l2/2 · ‖w‖²` (bias unpenalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub context_weights: Vec<f64>,
    pub action_weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn fit(
        contexts: ArrayView2<f64>,
        actions: &[usize],
        targets: &[f64],
        n_actions: usize,
        params: LogisticParams,
    ) -> Self {
        let (n, d) = contexts.dim();
        let mut m = Self { context_weights: vec![0.0; d], action_weights: vec![0.0; n_actions], bias: 0.0 };
        if n == 0 {
            return m;
        }
        let inv_n = 1.0 / n as f64;
        let flat: Vec<f64> = contexts.iter().copied().collect();
        let mut gw = vec![0.0; d];
        let mut ga = vec![0.0; n_actions];
        for _ in 0..params.iterations {
            gw.fill(0.0);
            ga.fill(0.0);
            let mut gb = 0.0;
            for ((x, &a), &y) in flat.chunks_exact(d.max(1)).zip(actions).zip(targets) {
                let x = &x[..d];
                let z: f64 = x.iter().zip(&m.context_weights).map(|(xi, w)| xi * w).sum::<f64>()
                    + m.action_weights[a]
                    + m.bias;
                let r = sigmoid(z) - y;
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += r * xi;
                }
                ga[a] += r;
                gb += r;
            }
            for (w, g) in m.context_weights.iter_mut().zip(&gw) {
                *w -= params.step * (g * inv_n + params.l2 * *w);
            }
            for (w, g) in m.action_weights.iter_mut().zip(&ga) {
                *w -= params.step * (g * inv_n + params.l2 * *w);
            }
            m.bias -= params.step * gb * inv_n;
        }
        m
    }

    pub fn logit(&self, context: ArrayView1<f64>, action: usize) -> f64 {
        let dot: f64 = context.iter().zip(&self.context_weights).map(|(x, w)| x * w).sum();
        dot + self.action_weights[action] + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum RewardModel {
    #[default]
    Unfitted,
    Constant(f64),
    Logistic(LogisticModel),
    Forest(Forest),
    Boosted(BoostedClassifier),
}

fn design_row(context: ArrayView1<f64>, action: usize, n_actions: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(context.len() + n_actions);
    row.extend(context.iter());
    row.extend((0..n_actions).map(|a| if a == action { 1.0 } else { 0.0 }));
    row
}

fn design_matrix(contexts: ArrayView2<f64>, actions: &[usize], n_actions: usize) -> Array2<f64> {
    let d = contexts.ncols();
    let mut x = Array2::zeros((actions.len(), d + n_actions));
    for (t, &a) in actions.iter().enumerate() {
        x.row_mut(t).slice_mut(ndarray::s![..d]).assign(&contexts.row(t));
        x[[t, d + a]] = 1.0;
    }
    x
}

pub fn forest_classifier_params() -> ForestParams {
    ForestParams {
        n_estimators: 100,
        max_depth: 10,
        min_samples_split: 2,
        min_samples_leaf: 1,
        max_samples: 1.0,
        max_features: MaxFeatures::Sqrt,
        bootstrap: true,
        max_bins: 64,
        oob_score: false,
    }
}

impl RewardModel {
    pub fn fit(
        kind: RewardModelKind,
        contexts: ArrayView2<f64>,
        actions: &[usize],
        rewards: &[f64],
        n_actions: usize,
        seed: u64,
    ) -> Result<Self, RewardModelError> {
        let Some(&first) = rewards.first() else {
            return Ok(RewardModel::Constant(0.0));
        };
        if rewards.iter().all(|&r| r == first) {
            return Ok(RewardModel::Constant(first.clamp(0.0, 1.0)));
        }
        Ok(match kind {
            RewardModelKind::LogisticRegression => RewardModel::Logistic(LogisticModel::fit(
                contexts,
                actions,
                rewards,
                n_actions,
                LogisticParams::default(),
            )),
            RewardModelKind::ForestClassifier => {
                let x = design_matrix(contexts, actions, n_actions);
                RewardModel::Forest(Forest::fit(x.view(), rewards, forest_classifier_params(), seed)?)
            }
            RewardModelKind::GradientBoostedClassifier => {
                let x = design_matrix(contexts, actions, n_actions);
                RewardModel::Boosted(BoostedClassifier::fit(x.view(), rewards, BoostingParams::default(), seed)?)
            }
        })
    }

    /// Estimated probability of reward 1.
    pub fn predict_q(&self, context: ArrayView1<f64>, action: usize, n_actions: usize) -> Result<f64, RewardModelError> {
        if action >= n_actions {
            return Err(RewardModelError::Action { action, n_actions });
        }
        let q = match self {
            RewardModel::Unfitted => return Err(RewardModelError::Unfitted),
            RewardModel::Constant(c) => *c,
            RewardModel::Logistic(m) => {
                if context.len() != m.context_weights.len() {
                    return Err(RewardModelError::Dimension { expected: m.context_weights.len(), got: context.len() });
                }
                sigmoid(m.logit(context, action))
            }
            RewardModel::Forest(f) => {
                let row = design_row(context, action, n_actions);
                f.predict_row(ArrayView1::from(&row))?
            }
            RewardModel::Boosted(b) => {
                let row = design_row(context, action, n_actions);
                if row.len() != b.n_features() {
                    return Err(RewardModelError::Dimension { expected: b.n_features(), got: row.len() });
                }
                b.predict_proba_row(ArrayView1::from(&row))
            }
        };
        Ok(q.clamp(0.0, 1.0))
    }
}

impl RewardModel {
    /// q̂(x, a) for every action.
    pub fn predict_q_row(&self, context: ArrayView1<f64>, n_actions: usize) -> Result<Vec<f64>, RewardModelError> {
        let ctx = context.to_vec();
        let raw = match self {
            RewardModel::Forest(f) => f.predict_one_hot(&ctx, n_actions)?,
            RewardModel::Boosted(b) => {
                if ctx.len() + n_actions != b.n_features() {
                    return Err(RewardModelError::Dimension { expected: b.n_features(), got: ctx.len() + n_actions });
                }
                b.predict_proba_one_hot(&ctx, n_actions)
            }
            other => return (0..n_actions).map(|a| other.predict_q(context, a, n_actions)).collect(),
        };
        Ok(raw.into_iter().map(|q| q.clamp(0.0, 1.0)).collect())
    }
}

/// Out-of-fold reward predictions for every round and action.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedRewardMatrix {
    pub q_hat: Array2<f64>,
    pub kind: RewardModelKind,
    pub fold_assignment: Vec<usize>,
}

/// Random partition of `n` rounds into three folds of sizes within one of
/// each other.
pub fn fold_assignment(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, &[rng::TAG_FOLDS]));
    let mut folds = vec![0; n];
    for (pos, &t) in order.iter().enumerate() {
        folds[t] = pos % N_FOLDS;
    }
    folds
}

pub fn fit_cross_fitted(task: &OpeTask, kind: RewardModelKind, seed: u64) -> Result<FittedRewardMatrix, RewardModelError> {
    let n = task.n_rounds();
    if n < N_FOLDS {
        return Err(RewardModelError::TooFewRounds(n));
    }
    let folds = fold_assignment(n, seed);
    let n_actions = task.n_actions();
    let log = task.logging();
    let per_fold: Vec<Vec<(usize, Vec<f64>)>> = (0..N_FOLDS)
        .into_par_iter()
        .map(|k| {
            let train: Vec<usize> = (0..n).filter(|&t| folds[t] != k).collect();
            let sub = log.select_rows(&train);
            let model = RewardModel::fit(
                kind,
                sub.contexts(),
                sub.actions(),
                sub.rewards(),
                n_actions,
                rng::derive_seed(seed, &[rng::TAG_MODEL, k as u64]),
            )?;
            (0..n)
                .filter(|&t| folds[t] == k)
                .map(|t| Ok((t, model.predict_q_row(log.context(t), n_actions)?)))
                .collect()
        })
        .collect::<Result<_, RewardModelError>>()?;
    let mut q_hat = Array2::zeros((n, n_actions));
    for (t, row) in per_fold.into_iter().flatten() {
        q_hat.row_mut(t).assign(&ArrayView1::from(&row));
    }
    Ok(FittedRewardMatrix { q_hat, kind, fold_assignment: folds })
}
