//! Lepski-style hyperparameter selection.
//!
//! Grid points are ordered from most to least shrunk. Each point gets an
//! interval `V̂_j ± c·σ̂_j`, with σ̂_j the standard deviation of bootstrap
//! means of its per-round terms. The chosen point is the largest `j` whose
//! interval intersects the interval of every earlier point.

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{per_round_terms, EstimatorError, EstimatorFamily, Hyperparams};
use crate::bandit::OpeTask;
use crate::rng::{self, stream};

pub const SLOPE_BOOTSTRAP: usize = 100;
pub const SLOPE_WIDTH: f64 = 2.0;

/// λ from most shrunk (1.0) to unshrunk (0.0), γ = 1.
pub fn default_subgaussian_grid() -> Vec<f64> {
    (0..=10).rev().map(|k| k as f64 / 10.0).collect()
}

/// λ ∈ {1e-3, …, 1e3, ∞}.
pub fn default_threshold_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (-3..=3).map(|k| 10f64.powi(k)).collect();
    g.push(f64::INFINITY);
    g
}

pub fn default_grid(family: EstimatorFamily) -> Vec<f64> {
    match family {
        EstimatorFamily::IPSLambda | EstimatorFamily::DRLambda => default_subgaussian_grid(),
        _ => default_threshold_grid(),
    }
}

fn hyper_for(family: EstimatorFamily, lambda: f64) -> Hyperparams {
    match family {
        EstimatorFamily::IPSLambda | EstimatorFamily::DRLambda => Hyperparams::SubGaussian { lambda, gamma: 1.0 },
        _ => Hyperparams::Threshold(lambda),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamChoice {
    pub lambda: f64,
    pub gamma: f64,
    pub selected_index: usize,
    pub grid: Vec<f64>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
}

impl HyperparamChoice {
    pub fn hyperparams(&self, family: EstimatorFamily) -> Hyperparams {
        hyper_for(family, self.lambda)
    }
}

/// Bootstrap resample indices shared by every grid point of one task.
pub fn bootstrap_indices(n: usize, resamples: usize, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = stream(seed, &[rng::TAG_SLOPE]);
    (0..resamples).map(|_| (0..n).map(|_| rng.random_range(0..n) as u32).collect()).collect()
}

fn bootstrap_std(terms: &[f64], indices: &[Vec<u32>]) -> f64 {
    if indices.len() < 2 {
        return 0.0;
    }
    let n = terms.len() as f64;
    let means: Vec<f64> = indices
        .iter()
        .map(|idx| idx.iter().map(|&i| terms[i as usize]).sum::<f64>() / n)
        .collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt()
}

/// Index chosen by the intersection rule from estimates and half-widths.
pub fn lepski_index(estimates: &[f64], half_widths: &[f64]) -> usize {
    let mut chosen = 0;
    for j in 1..estimates.len() {
        let ok = (0..j).all(|i| (estimates[i] - estimates[j]).abs() <= half_widths[i] + half_widths[j]);
        if ok {
            chosen = j;
        }
    }
    chosen
}

pub fn slope_select(
    task: &OpeTask,
    family: EstimatorFamily,
    q_hat: Option<ArrayView2<f64>>,
    grid: &[f64],
    seed: u64,
) -> Result<HyperparamChoice, EstimatorError> {
    let indices = bootstrap_indices(task.n_rounds(), SLOPE_BOOTSTRAP, seed);
    slope_select_with(task, family, q_hat, grid, &indices)
}

/// As [`slope_select`] with caller-supplied bootstrap indices.
pub fn slope_select_with(
    task: &OpeTask,
    family: EstimatorFamily,
    q_hat: Option<ArrayView2<f64>>,
    grid: &[f64],
    indices: &[Vec<u32>],
) -> Result<HyperparamChoice, EstimatorError> {
    if grid.is_empty() {
        return Err(EstimatorError::EmptyGrid);
    }
    if !family.is_tunable() {
        return Err(EstimatorError::Hyperparameter(format!("{} has no hyperparameter", family.name())));
    }
    if task.n_rounds() == 0 {
        return Err(EstimatorError::Empty);
    }
    let mut estimates = Vec::with_capacity(grid.len());
    let mut std_errors = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let terms = per_round_terms(family, task, q_hat, hyper_for(family, lambda))?;
        estimates.push(terms.iter().sum::<f64>() / terms.len() as f64);
        std_errors.push(bootstrap_std(&terms, indices));
    }
    let widths: Vec<f64> = std_errors.iter().map(|s| SLOPE_WIDTH * s).collect();
    let selected_index = lepski_index(&estimates, &widths);
    Ok(HyperparamChoice {
        lambda: grid[selected_index],
        gamma: 1.0,
        selected_index,
        grid: grid.to_vec(),
        estimates,
        std_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lepski_rule() {
        assert_eq!(lepski_index(&[1.0], &[0.0]), 0);
        assert_eq!(lepski_index(&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]), 2);
        // Third interval misses the first.
        assert_eq!(lepski_index(&[0.0, 0.5, 3.0], &[0.5, 0.5, 0.5]), 1);
    }

    #[test]
    fn grids() {
        let g = default_subgaussian_grid();
        assert_eq!(g.len(), 11);
        assert_eq!((g[0], g[10]), (1.0, 0.0));
        let t = default_threshold_grid();
        assert_eq!(t.len(), 8);
        assert!(t[7].is_infinite());
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }
}
