use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{
    bootstrap_indices, default_grid, enumerate_candidates, estimate, slope_select_with, EstimatorError,
    EstimatorSpec, HyperparamChoice, Hyperparams, SLOPE_BOOTSTRAP,
};
use crate::bandit::OpeTask;
use crate::reward_models::{fit_cross_fitted, RewardModelKind};

/// Cross-fitted q̂ for each reward-model kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardMatrices(pub BTreeMap<RewardModelKind, Array2<f64>>);

impl RewardMatrices {
    /// Fits all three kinds on the same fold partition.
    pub fn fit(task: &OpeTask, seed: u64) -> Result<Self, EstimatorError> {
        let mut m = BTreeMap::new();
        for kind in RewardModelKind::ALL {
            m.insert(kind, fit_cross_fitted(task, kind, seed)?.q_hat);
        }
        Ok(Self(m))
    }

    pub fn get(&self, kind: RewardModelKind) -> Option<ArrayView2<'_, f64>> {
        self.0.get(&kind).map(|a| a.view())
    }

    pub fn for_spec(&self, spec: &EstimatorSpec) -> Result<Option<ArrayView2<'_, f64>>, EstimatorError> {
        match spec.reward_model() {
            None => Ok(None),
            Some(kind) => self.get(kind).map(Some).ok_or_else(|| EstimatorError::MissingRewardModel(spec.id())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEstimate {
    pub spec: EstimatorSpec,
    pub estimate: f64,
    pub choice: Option<HyperparamChoice>,
}

/// Evaluates one candidate, tuning its hyperparameter when it has one.
pub fn run_candidate(
    spec: &EstimatorSpec,
    task: &OpeTask,
    q_hat: Option<ArrayView2<f64>>,
    indices: &[Vec<u32>],
) -> Result<CandidateEstimate, EstimatorError> {
    let family = spec.family();
    if family.is_tunable() {
        let choice = slope_select_with(task, family, q_hat, &default_grid(family), indices)?;
        let value = choice.estimates[choice.selected_index];
        Ok(CandidateEstimate { spec: *spec, estimate: value, choice: Some(choice) })
    } else {
        let value = estimate(spec, task, q_hat, Hyperparams::None)?;
        Ok(CandidateEstimate { spec: *spec, estimate: value, choice: None })
    }
}

/// All 21 candidates on one task, in enumeration order.
pub fn sweep_candidates(task: &OpeTask, q: &RewardMatrices, seed: u64) -> Result<Vec<CandidateEstimate>, EstimatorError> {
    let indices = bootstrap_indices(task.n_rounds(), SLOPE_BOOTSTRAP, seed);
    enumerate_candidates()
        .iter()
        .map(|spec| run_candidate(spec, task, q.for_spec(spec)?, &indices))
        .collect()
}
