//! The meta-model: a random-forest regressor from the 43 features of an
//! (estimator, task) pair to that estimator's MSE on the task.

mod bounds;
mod dataset;
mod persist;
mod preprocess;
mod search;

pub use bounds::*;
pub use dataset::*;
pub use persist::*;
pub use preprocess::*;
pub use search::*;

use ndarray::ArrayView1;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{is_categorical, FeatureGroup, FEATURE_SCHEMA_VERSION, N_FEATURES};
use crate::tree::{Forest, ForestParams, MaxFeatures, TreeError};

#[derive(Debug, Error)]
pub enum MetaModelError {
    #[error("invalid training data: {0}")]
    Data(String),
    #[error("feature schema mismatch: {0}")]
    Schema(String),
    #[error("invalid hyperparameters: {0}")]
    Params(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Forest hyperparameters searched over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaHyperparams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_samples: f64,
    pub max_features: f64,
}

impl Default for MetaHyperparams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 100,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_samples: 1.0,
            max_features: 1.0,
        }
    }
}

impl MetaHyperparams {
    pub const N_ESTIMATORS: (usize, usize) = (50, 500);
    pub const MAX_DEPTH: (usize, usize) = (1, 100);
    pub const MIN_SAMPLES_SPLIT: (usize, usize) = (2, 50);
    pub const MIN_SAMPLES_LEAF: (usize, usize) = (1, 50);
    /// Half-open (low, high].
    pub const MAX_SAMPLES: (f64, f64) = (0.01, 1.0);
    pub const MAX_FEATURES: (f64, f64) = (0.1, 1.0);

    /// Uniform draw from the search space; integers inclusive, fractions in
    /// (low, high].
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        let frac = |rng: &mut R, (lo, hi): (f64, f64)| hi - rng.random::<f64>() * (hi - lo);
        Self {
            n_estimators: rng.random_range(Self::N_ESTIMATORS.0..=Self::N_ESTIMATORS.1),
            max_depth: rng.random_range(Self::MAX_DEPTH.0..=Self::MAX_DEPTH.1),
            min_samples_split: rng.random_range(Self::MIN_SAMPLES_SPLIT.0..=Self::MIN_SAMPLES_SPLIT.1),
            min_samples_leaf: rng.random_range(Self::MIN_SAMPLES_LEAF.0..=Self::MIN_SAMPLES_LEAF.1),
            max_samples: frac(rng, Self::MAX_SAMPLES),
            max_features: frac(rng, Self::MAX_FEATURES),
        }
    }

    pub fn in_search_space(&self) -> bool {
        let within = |v: usize, (lo, hi): (usize, usize)| (lo..=hi).contains(&v);
        let within_f = |v: f64, (lo, hi): (f64, f64)| v > lo && v <= hi;
        within(self.n_estimators, Self::N_ESTIMATORS)
            && within(self.max_depth, Self::MAX_DEPTH)
            && within(self.min_samples_split, Self::MIN_SAMPLES_SPLIT)
            && within(self.min_samples_leaf, Self::MIN_SAMPLES_LEAF)
            && within_f(self.max_samples, Self::MAX_SAMPLES)
            && within_f(self.max_features, Self::MAX_FEATURES)
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_estimators: self.n_estimators,
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_samples: self.max_samples,
            max_features: MaxFeatures::Fraction(self.max_features),
            bootstrap: true,
            max_bins: 255,
            oob_score: true,
        }
    }
}

/// Which of the 43 features the model sees. Hidden features are fed as 0, so
/// the forest never splits on them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask(pub Vec<bool>);

impl Default for FeatureMask {
    fn default() -> Self {
        Self(vec![true; N_FEATURES])
    }
}

impl FeatureMask {
    pub fn groups(groups: &[FeatureGroup]) -> Self {
        Self((0..N_FEATURES).map(|i| groups.contains(&FeatureGroup::of(i))).collect())
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.0).map(|(&v, &keep)| if keep { v } else { 0.0 }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub n_records: usize,
    pub seed: u64,
    pub hyperparams: MetaHyperparams,
    pub search: Option<SearchRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedMetaModel {
    pub preprocessor: PreprocessorState,
    pub forest: Forest,
    pub schema_version: u32,
    pub mask: FeatureMask,
    pub metadata: TrainingMetadata,
}

impl TrainedMetaModel {
    /// Fits preprocessing and the forest on raw 43-feature rows and MSE targets.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        hyper: MetaHyperparams,
        mask: FeatureMask,
        seed: u64,
    ) -> Result<Self, MetaModelError> {
        if let Some(r) = x.iter().find(|r| r.len() != N_FEATURES) {
            return Err(MetaModelError::Schema(format!("expected {N_FEATURES} features, got {}", r.len())));
        }
        if y.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MetaModelError::Data("targets must be finite and nonnegative".into()));
        }
        let masked: Vec<Vec<f64>> = x.iter().map(|r| mask.apply(r)).collect();
        let categorical: Vec<bool> = (0..N_FEATURES).map(is_categorical).collect();
        let preprocessor = PreprocessorState::fit(&masked, y, &categorical)?;
        let design = preprocessor.transform(&masked)?;
        let targets: Vec<f64> = y.iter().map(|&v| preprocessor.target.forward(v)).collect();
        let forest = Forest::fit(design.view(), &targets, hyper.forest_params(), seed)?;
        Ok(Self {
            preprocessor,
            forest,
            schema_version: FEATURE_SCHEMA_VERSION,
            mask,
            metadata: TrainingMetadata { n_records: x.len(), seed, hyperparams: hyper, search: None },
        })
    }

    pub fn fit_records(
        records: &[MseRecord],
        hyper: MetaHyperparams,
        mask: FeatureMask,
        seed: u64,
    ) -> Result<Self, MetaModelError> {
        let (x, y) = records_to_rows(records);
        Self::fit(&x, &y, hyper, mask, seed)
    }

    fn check_schema(&self) -> Result<(), MetaModelError> {
        if self.schema_version != FEATURE_SCHEMA_VERSION {
            return Err(MetaModelError::Schema(format!(
                "model uses feature schema {}, this build uses {}",
                self.schema_version, FEATURE_SCHEMA_VERSION
            )));
        }
        Ok(())
    }

    /// Predicted MSE on the original scale.
    pub fn predict(&self, features: &[f64]) -> Result<f64, MetaModelError> {
        self.check_schema()?;
        if features.len() != N_FEATURES {
            return Err(MetaModelError::Schema(format!("expected {N_FEATURES} features, got {}", features.len())));
        }
        let mut row = Vec::with_capacity(self.preprocessor.n_outputs());
        self.preprocessor.transform_row(&self.mask.apply(features), &mut row)?;
        let s = self.forest.predict_row(ArrayView1::from(&row))?;
        Ok(self.preprocessor.target.inverse(s).max(0.0))
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, MetaModelError> {
        rows.par_iter().map(|r| self.predict(r)).collect()
    }

    /// Mean decrease in impurity per source feature, summing to 1 unless the
    /// forest never split.
    pub fn mdi_importance(&self) -> Vec<f64> {
        let mut out = vec![0.0; N_FEATURES];
        for (imp, src) in self.forest.feature_importances().into_iter().zip(self.preprocessor.output_sources()) {
            out[src] += imp;
        }
        out
    }
}

pub fn records_to_rows(records: &[MseRecord]) -> (Vec<Vec<f64>>, Vec<f64>) {
    records.iter().map(|r| (r.features.clone(), r.mse)).unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn random_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = stream(seed, &[]);
        (0..n)
            .map(|_| {
                (0..N_FEATURES)
                    .map(|i| if is_categorical(i) { rng.random_range(0..2) as f64 } else { rng.random::<f64>() * 5.0 })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn constant_target_is_reproduced() {
        let x = random_rows(40, 1);
        let hyper = MetaHyperparams { n_estimators: 10, ..Default::default() };
        let m = TrainedMetaModel::fit(&x, &[0.25; 40], hyper, FeatureMask::default(), 0).unwrap();
        for r in random_rows(20, 2) {
            assert!((m.predict(&r).unwrap() - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn wrong_length_is_a_schema_error() {
        let x = random_rows(10, 1);
        let hyper = MetaHyperparams { n_estimators: 5, ..Default::default() };
        let m = TrainedMetaModel::fit(&x, &[1.0; 10], hyper, FeatureMask::default(), 0).unwrap();
        assert!(matches!(m.predict(&[0.0; 5]), Err(MetaModelError::Schema(_))));
    }

    #[test]
    fn samples_stay_in_space() {
        let mut rng = stream(3, &[]);
        for _ in 0..1000 {
            assert!(MetaHyperparams::sample(&mut rng).in_search_space());
        }
    }

    #[test]
    fn mask_hides_groups() {
        let m = FeatureMask::groups(&[FeatureGroup::Estimator]);
        assert_eq!(m.0.iter().filter(|&&b| b).count(), 9);
    }
}
