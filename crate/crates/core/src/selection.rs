//! Zero-shot estimator selection, ground-truth MSE and evaluation metrics.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{true_policy_value, BanditError, LoggingDataset, OpeTask, TaskGenParams, TaskGenerator};
use crate::estimators::{
    bootstrap_indices, enumerate_candidates, run_candidate, sweep_candidates, EstimatorError, EstimatorSpec,
    RewardMatrices, SLOPE_BOOTSTRAP,
};
use crate::features::{extract_task_features, with_estimator, FeatureError};
use crate::meta_model::{MetaModelError, TrainedMetaModel};
use crate::reward_models::fit_cross_fitted;
use crate::rng::{derive_seed, stream, TAG_BOOTSTRAP, TAG_SELECTION};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error(transparent)]
    Meta(#[from] MetaModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("vectors have different lengths ({0} vs {1})")]
    Length(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("best MSE is 0; absolute regret is {absolute}")]
    ZeroBest { absolute: f64 },
    #[error("ranking has zero variance; Spearman correlation is undefined")]
    ZeroVariance,
    #[error("fraction must lie in (0, 1], got {0}")]
    Fraction(f64),
    #[error("the evaluation policy and reward matrix have shapes {policy:?} and {rewards:?}")]
    Shape { policy: (usize, usize), rewards: (usize, usize) },
}

/// Index of the smallest value; ties keep the earliest.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v < values[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub candidates: Vec<EstimatorSpec>,
    pub predicted_mse: Vec<f64>,
    pub selected: EstimatorSpec,
    pub ground_truth_mse: Option<Vec<f64>>,
    pub relative_regret: Option<f64>,
    /// Regret when the best ground-truth MSE is 0 and the relative form is undefined.
    pub absolute_regret: Option<f64>,
    pub spearman: Option<f64>,
}

impl SelectionResult {
    pub fn from_predictions(candidates: Vec<EstimatorSpec>, predicted_mse: Vec<f64>) -> Self {
        let selected = candidates[argmin_first(&predicted_mse).expect("at least one candidate")];
        Self {
            candidates,
            predicted_mse,
            selected,
            ground_truth_mse: None,
            relative_regret: None,
            absolute_regret: None,
            spearman: None,
        }
    }

    pub fn selected_index(&self) -> usize {
        self.candidates.iter().position(|c| *c == self.selected).expect("selected is a candidate")
    }

    /// Attaches ground truth (in candidate order) and computes regret and Spearman.
    pub fn with_ground_truth(mut self, truth: Vec<f64>) -> Result<Self, MetricError> {
        if truth.len() != self.candidates.len() {
            return Err(MetricError::Length(truth.len(), self.candidates.len()));
        }
        let best = truth.iter().copied().fold(f64::INFINITY, f64::min);
        let chosen = truth[self.selected_index()];
        match relative_regret(chosen, best) {
            Ok(r) => self.relative_regret = Some(r),
            Err(MetricError::ZeroBest { absolute }) => self.absolute_regret = Some(absolute),
            Err(e) => return Err(e),
        }
        self.spearman = spearman_rank(&self.predicted_mse, &truth).ok();
        self.ground_truth_mse = Some(truth);
        Ok(self)
    }
}

/// Predicts every candidate's MSE on `task` and picks the smallest.
pub fn autoope_select(model: &TrainedMetaModel, task: &OpeTask) -> Result<SelectionResult, SelectionError> {
    let task_features = extract_task_features(task)?;
    let candidates = enumerate_candidates();
    let predicted = candidates
        .iter()
        .map(|c| model.predict(with_estimator(&task_features, c).as_slice()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SelectionResult::from_predictions(candidates, predicted))
}

/// Seed for the reward models and bootstrap of one logging realization.
pub fn realization_seed(task_seed: u64, realization: u64) -> u64 {
    derive_seed(task_seed, &[TAG_SELECTION, realization])
}

/// Runs one candidate on `task` the same way the sweep does.
pub fn run_estimator(spec: &EstimatorSpec, task: &OpeTask, seed: u64) -> Result<f64, EstimatorError> {
    let q = match spec.reward_model() {
        Some(kind) => Some(fit_cross_fitted(task, kind, seed)?.q_hat),
        None => None,
    };
    let indices = bootstrap_indices(task.n_rounds(), SLOPE_BOOTSTRAP, seed);
    Ok(run_candidate(spec, task, q.as_ref().map(|a| a.view()), &indices)?.estimate)
}

/// Mean over `n_e` logging realizations of (estimate − V_true)², with a
/// caller-supplied estimator. Realizations run in parallel.
pub fn ground_truth_mse_with<F>(params: &TaskGenParams, n_e: usize, estimator: F) -> Result<f64, SelectionError>
where
    F: Fn(&OpeTask, u64) -> Result<f64, SelectionError> + Sync,
{
    if n_e == 0 {
        return Err(MetricError::TooShort { needed: 1, got: 0 }.into());
    }
    let generator = TaskGenerator::new(params.clone())?;
    let v_true = true_policy_value(&generator.ground_truth()?);
    let sq: Vec<f64> = (0..n_e as u64)
        .into_par_iter()
        .map(|s| {
            let task = generator.logging_task(s)?;
            Ok((estimator(&task, s)? - v_true).powi(2))
        })
        .collect::<Result<_, SelectionError>>()?;
    Ok(sq.iter().sum::<f64>() / n_e as f64)
}

pub fn ground_truth_mse_synthetic(
    params: &TaskGenParams,
    spec: &EstimatorSpec,
    n_e: usize,
) -> Result<f64, SelectionError> {
    ground_truth_mse_with(params, n_e, |task, s| Ok(run_estimator(spec, task, realization_seed(params.seed, s))?))
}

/// Estimates of all candidates on every realization, with the true value.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSweep {
    pub v_true: f64,
    /// `estimates[s][c]` for realization `s` and candidate `c`.
    pub estimates: Vec<Vec<f64>>,
}

impl GroundTruthSweep {
    /// Per-candidate mean squared error across realizations.
    pub fn mse(&self) -> Vec<f64> {
        let n = self.estimates.len() as f64;
        let k = self.estimates.first().map_or(0, Vec::len);
        (0..k).map(|c| self.estimates.iter().map(|e| (e[c] - self.v_true).powi(2)).sum::<f64>() / n).collect()
    }
}

/// All 21 candidates on one realization, with reward models fitted once.
pub fn sweep_realization(task: &OpeTask, seed: u64) -> Result<Vec<f64>, EstimatorError> {
    let q = RewardMatrices::fit(task, seed)?;
    Ok(sweep_candidates(task, &q, seed)?.into_iter().map(|c| c.estimate).collect())
}

/// V = (1/n) Σ_t Σ_a π_e(a|x_t)·r_{t,a} for a fully observed reward matrix.
pub fn ground_truth_value_classification(
    evaluation: ArrayView2<f64>,
    rewards: ArrayView2<f64>,
) -> Result<f64, MetricError> {
    if evaluation.dim() != rewards.dim() {
        return Err(MetricError::Shape { policy: evaluation.dim(), rewards: rewards.dim() });
    }
    let n = evaluation.nrows();
    if n == 0 {
        return Err(MetricError::TooShort { needed: 1, got: 0 });
    }
    Ok((&evaluation * &rewards).sum() / n as f64)
}

/// (estimate − mean on-policy reward)².
pub fn ground_truth_mse_onpolicy(estimate: f64, rewards: &[f64]) -> Result<f64, MetricError> {
    if rewards.is_empty() {
        return Err(MetricError::TooShort { needed: 1, got: 0 });
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    Ok((estimate - mean).powi(2))
}

/// (selected − best) / best.
pub fn relative_regret(selected_mse: f64, best_mse: f64) -> Result<f64, MetricError> {
    if best_mse == 0.0 {
        return Err(MetricError::ZeroBest { absolute: selected_mse - best_mse });
    }
    Ok((selected_mse - best_mse) / best_mse)
}

/// 1-based ranks, ties receiving the average of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman_rank(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::Length(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricError::TooShort { needed: 2, got: a.len() });
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Resamples ⌈fraction·n⌉ rounds with replacement, drawing from each chosen
/// action's rounds in proportion to its share of the data.
pub fn stratified_bootstrap(task: &OpeTask, fraction: f64, seed: u64) -> Result<OpeTask, MetricError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(MetricError::Fraction(fraction));
    }
    let n = task.n_rounds();
    let m = (fraction * n as f64).ceil() as usize;
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); task.n_actions()];
    for (t, &a) in task.actions().iter().enumerate() {
        strata[a].push(t);
    }
    // Largest-remainder apportionment of m draws across strata.
    let quotas: Vec<f64> = strata.iter().map(|s| s.len() as f64 * m as f64 / n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..strata.len()).filter(|&a| !strata[a].is_empty()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let short = m - counts.iter().sum::<usize>();
    for &a in order.iter().take(short) {
        counts[a] += 1;
    }
    let mut rng = stream(seed, &[TAG_BOOTSTRAP]);
    let mut rows = Vec::with_capacity(m);
    for (stratum, &c) in strata.iter().zip(&counts) {
        rows.extend((0..c).map(|_| stratum[rng.random_range(0..stratum.len())]));
    }
    rows.shuffle(&mut rng);
    Ok(task.select_rows(&rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Result<ConfidenceInterval, MetricError> {
    if values.is_empty() {
        return Err(MetricError::TooShort { needed: 1, got: 0 });
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut rng = stream(seed, &[TAG_BOOTSTRAP, 1]);
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let q = |p: f64| means[((p * (means.len() - 1) as f64).round() as usize).min(means.len() - 1)];
    let tail = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval { mean, lower: q(tail), upper: q(1.0 - tail) })
}

/// Logging data built from a fully observed classification task; see the
/// converter in the command-line crate.
#[derive(Debug, Clone, PartialEq)]
pub struct FullFeedbackTask {
    pub task: OpeTask,
    /// `rewards[[t, a]]` for every round and action.
    pub reward_matrix: Array2<f64>,
}

impl FullFeedbackTask {
    pub fn true_value(&self) -> Result<f64, MetricError> {
        ground_truth_value_classification(self.task.evaluation(), self.reward_matrix.view())
    }

    pub fn logging(&self) -> &LoggingDataset {
        self.task.logging()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn argmin_keeps_first_tie() {
        assert_eq!(argmin_first(&[2.0, 1.0, 1.0]), Some(1));
        assert_eq!(argmin_first(&[]), None);
    }

    #[test]
    fn zero_variance_spearman_is_flagged() {
        assert_eq!(spearman_rank(&[1.0, 1.0], &[1.0, 2.0]), Err(MetricError::ZeroVariance));
    }

    #[test]
    fn zero_best_reports_absolute_regret() {
        assert_eq!(relative_regret(0.5, 0.0), Err(MetricError::ZeroBest { absolute: 0.5 }));
    }

    #[test]
    fn ci_brackets_mean() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ci = bootstrap_ci(&v, 1000, 0.95, 1).unwrap();
        assert!(ci.lower < ci.mean && ci.mean < ci.upper);
    }
}
