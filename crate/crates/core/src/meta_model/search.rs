//! Hyperparameter search minimizing mean validation regret.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{FeatureMask, MetaHyperparams, MetaModelError, MseRecord, TrainedMetaModel};
use crate::estimators::enumerate_candidates;
use crate::rng::{derive_seed, stream, TAG_MODEL, TAG_SEARCH};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub hyperparams: MetaHyperparams,
    pub validation_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub strategy: String,
    pub trials: Vec<Trial>,
    pub best_index: usize,
}

/// Proposes the next configuration given the trials so far.
pub trait SearchStrategy {
    fn name(&self) -> &str;
    fn propose(&mut self, iteration: usize, history: &[Trial]) -> MetaHyperparams;
}

/// Independent uniform draws from the search space.
#[derive(Debug, Clone, Copy)]
pub struct RandomSearch {
    pub seed: u64,
}

impl SearchStrategy for RandomSearch {
    fn name(&self) -> &str {
        "random"
    }

    fn propose(&mut self, iteration: usize, _history: &[Trial]) -> MetaHyperparams {
        MetaHyperparams::sample(&mut stream(self.seed, &[TAG_SEARCH, iteration as u64]))
    }
}

/// Mean over (task, realization) instances of MSE(selected) − MSE(best),
/// where the selected candidate minimizes `predicted` and ties go to the
/// earlier candidate in enumeration order.
pub fn mean_regret(records: &[MseRecord], predicted: &[f64]) -> f64 {
    let candidates = enumerate_candidates();
    let rank = |i: usize| candidates.iter().position(|c| *c == records[i].estimator).unwrap_or(usize::MAX);
    let mut groups: BTreeMap<(u64, u32), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.task_id, r.realization)).or_default().push(i);
    }
    let total: f64 = groups
        .into_values()
        .map(|mut g| {
            g.sort_by_key(|&i| rank(i));
            let best = g.iter().map(|&i| records[i].mse).fold(f64::INFINITY, f64::min);
            let sel = g.iter().copied().reduce(|a, b| if predicted[b] < predicted[a] { b } else { a }).unwrap();
            records[sel].mse - best
        })
        .sum();
    total / records.iter().map(|r| (r.task_id, r.realization)).collect::<BTreeSet<_>>().len() as f64
}

pub fn hyperparam_search(
    train: &[MseRecord],
    validation: &[MseRecord],
    budget: usize,
    strategy: &mut dyn SearchStrategy,
    mask: &FeatureMask,
    seed: u64,
) -> Result<(MetaHyperparams, SearchRecord), MetaModelError> {
    if budget == 0 {
        return Err(MetaModelError::Params("search budget must be at least 1".into()));
    }
    if validation.is_empty() {
        return Err(MetaModelError::Data("empty validation set".into()));
    }
    let (val_x, _) = super::records_to_rows(validation);
    let mut trials: Vec<Trial> = Vec::with_capacity(budget);
    let mut best_index = 0;
    for i in 0..budget {
        let hyperparams = strategy.propose(i, &trials);
        let model = TrainedMetaModel::fit_records(
            train,
            hyperparams,
            mask.clone(),
            derive_seed(seed, &[TAG_MODEL, i as u64]),
        )?;
        let predicted = model.predict_many(&val_x)?;
        let validation_regret = mean_regret(validation, &predicted);
        if validation_regret < trials.get(best_index).map_or(f64::INFINITY, |t| t.validation_regret) {
            best_index = i;
        }
        trials.push(Trial { hyperparams, validation_regret });
    }
    let best = trials[best_index].hyperparams;
    Ok((best, SearchRecord { strategy: strategy.name().to_string(), trials, best_index }))
}

/// Searches, then refits the best configuration on the training records.
pub fn train_with_search(
    train: &[MseRecord],
    validation: &[MseRecord],
    budget: usize,
    mask: FeatureMask,
    seed: u64,
) -> Result<TrainedMetaModel, MetaModelError> {
    let mut strategy = RandomSearch { seed };
    let (best, record) = hyperparam_search(train, validation, budget, &mut strategy, &mask, seed)?;
    let mut model = TrainedMetaModel::fit_records(train, best, mask, derive_seed(seed, &[TAG_MODEL, record.best_index as u64]))?;
    model.metadata.search = Some(record);
    Ok(model)
}
