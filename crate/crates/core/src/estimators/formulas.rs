use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{EstimatorError, EstimatorFamily, EstimatorSpec};
use crate::bandit::OpeTask;

/// Hyperparameters of one estimator evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Hyperparams {
    None,
    /// Weight `((1 - λ) w^γ + λ)^(1/γ)`.
    SubGaussian { lambda: f64, gamma: f64 },
    /// λ of DRos or Switch; may be `f64::INFINITY`.
    Threshold(f64),
}

/// `w_t = π_e(a_t|x_t) / π_b(a_t|x_t)`.
pub fn importance_weights(task: &OpeTask) -> Result<Vec<f64>, EstimatorError> {
    let log = task.logging();
    (0..task.n_rounds())
        .map(|t| {
            let pb = log.chosen_propensity(t);
            if pb <= 0.0 {
                Err(EstimatorError::NoSupport { round: t })
            } else {
                Ok(task.chosen_evaluation(t) / pb)
            }
        })
        .collect()
}

fn check_q(task: &OpeTask, q_hat: ArrayView2<f64>) -> Result<(), EstimatorError> {
    let expected = (task.n_rounds(), task.n_actions());
    if q_hat.dim() != expected {
        return Err(EstimatorError::Shape { expected, got: q_hat.dim() });
    }
    if task.n_rounds() == 0 {
        return Err(EstimatorError::Empty);
    }
    Ok(())
}

/// `Σ_a π_e(a|x_t) q̂(x_t, a)` per round.
pub fn dm_terms(task: &OpeTask, q_hat: ArrayView2<f64>) -> Result<Vec<f64>, EstimatorError> {
    check_q(task, q_hat)?;
    let pe = task.evaluation();
    Ok((0..task.n_rounds()).map(|t| pe.row(t).dot(&q_hat.row(t))).collect())
}

fn residuals(task: &OpeTask, q_hat: ArrayView2<f64>) -> Vec<f64> {
    task.rewards()
        .iter()
        .zip(task.actions())
        .enumerate()
        .map(|(t, (r, &a))| r - q_hat[[t, a]])
        .collect()
}

fn mean(v: &[f64]) -> Result<f64, EstimatorError> {
    if v.is_empty() {
        return Err(EstimatorError::Empty);
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

fn check_subgaussian(lambda: f64, gamma: f64) -> Result<(), EstimatorError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(EstimatorError::Hyperparameter(format!("lambda {lambda} outside [0, 1]")));
    }
    if gamma == 0.0 || gamma > 1.0 || gamma.is_nan() {
        return Err(EstimatorError::Hyperparameter(format!("gamma {gamma} must be nonzero and at most 1")));
    }
    Ok(())
}

fn check_threshold(lambda: f64) -> Result<(), EstimatorError> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(EstimatorError::Hyperparameter(format!("lambda {lambda} must be nonnegative")));
    }
    Ok(())
}

pub fn subgaussian_weight(w: f64, lambda: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        (1.0 - lambda) * w + lambda
    } else {
        ((1.0 - lambda) * w.powf(gamma) + lambda).powf(1.0 / gamma)
    }
}

/// `λw / (w² + λ)`, equal to `w` at λ = ∞ and 0 at λ = 0.
pub fn optimistic_shrinkage_weight(w: f64, lambda: f64) -> f64 {
    if lambda.is_infinite() {
        w
    } else if lambda == 0.0 {
        0.0
    } else {
        lambda * w / (w * w + lambda)
    }
}

pub fn switch_weight(w: f64, lambda: f64) -> f64 {
    if w <= lambda {
        w
    } else {
        0.0
    }
}

/// Residual weights of a doubly robust variant, or the reward weights of an
/// importance-sampling variant, for the linear (non-normalized) families.
fn transformed_weights(w: &[f64], hyper: Hyperparams, family: EstimatorFamily) -> Result<Vec<f64>, EstimatorError> {
    use EstimatorFamily::*;
    Ok(match (family, hyper) {
        (IPS | DR, _) => w.to_vec(),
        (IPSLambda | DRLambda, Hyperparams::SubGaussian { lambda, gamma }) => {
            check_subgaussian(lambda, gamma)?;
            w.iter().map(|&x| subgaussian_weight(x, lambda, gamma)).collect()
        }
        (DRos, Hyperparams::Threshold(lambda)) => {
            check_threshold(lambda)?;
            w.iter().map(|&x| optimistic_shrinkage_weight(x, lambda)).collect()
        }
        (SwitchDR, Hyperparams::Threshold(lambda)) => {
            check_threshold(lambda)?;
            w.iter().map(|&x| switch_weight(x, lambda)).collect()
        }
        (DM, _) => vec![0.0; w.len()],
        (f, h) => {
            return Err(EstimatorError::Hyperparameter(format!("{h:?} does not apply to {}", f.name())));
        }
    })
}

/// Per-round terms whose mean is the estimate, for every family except the
/// self-normalized ones.
pub fn per_round_terms(
    family: EstimatorFamily,
    task: &OpeTask,
    q_hat: Option<ArrayView2<f64>>,
    hyper: Hyperparams,
) -> Result<Vec<f64>, EstimatorError> {
    if matches!(family, EstimatorFamily::SNIPS | EstimatorFamily::SNDR) {
        return Err(EstimatorError::Hyperparameter(format!("{} is not a per-round average", family.name())));
    }
    let w = importance_weights(task)?;
    let tw = transformed_weights(&w, hyper, family)?;
    if !family.needs_reward_model() {
        return Ok(tw.iter().zip(task.rewards()).map(|(w, r)| w * r).collect());
    }
    let q = q_hat.ok_or_else(|| EstimatorError::MissingRewardModel(family.name().into()))?;
    let base = dm_terms(task, q)?;
    let res = residuals(task, q);
    Ok(base.iter().zip(tw.iter().zip(&res)).map(|(b, (w, e))| b + w * e).collect())
}

pub fn dm_estimate(task: &OpeTask, q_hat: ArrayView2<f64>) -> Result<f64, EstimatorError> {
    mean(&dm_terms(task, q_hat)?)
}

pub fn ips_estimate(task: &OpeTask) -> Result<f64, EstimatorError> {
    mean(&per_round_terms(EstimatorFamily::IPS, task, None, Hyperparams::None)?)
}

pub fn snips_estimate(task: &OpeTask) -> Result<f64, EstimatorError> {
    let w = importance_weights(task)?;
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(EstimatorError::ZeroWeightSum);
    }
    Ok(w.iter().zip(task.rewards()).map(|(w, r)| w * r).sum::<f64>() / total)
}

pub fn ips_lambda_estimate(task: &OpeTask, lambda: f64, gamma: f64) -> Result<f64, EstimatorError> {
    mean(&per_round_terms(EstimatorFamily::IPSLambda, task, None, Hyperparams::SubGaussian { lambda, gamma })?)
}

pub fn dr_estimate(task: &OpeTask, q_hat: ArrayView2<f64>) -> Result<f64, EstimatorError> {
    mean(&per_round_terms(EstimatorFamily::DR, task, Some(q_hat), Hyperparams::None)?)
}

/// Residuals weighted by `w_t / Σ_j w_j`; the baseline keeps its `1/n_b`.
pub fn sndr_estimate(task: &OpeTask, q_hat: ArrayView2<f64>) -> Result<f64, EstimatorError> {
    let base = dm_estimate(task, q_hat)?;
    let w = importance_weights(task)?;
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(EstimatorError::ZeroWeightSum);
    }
    let res = residuals(task, q_hat);
    Ok(base + w.iter().zip(&res).map(|(w, e)| w / total * e).sum::<f64>())
}

pub fn dr_lambda_estimate(task: &OpeTask, q_hat: ArrayView2<f64>, lambda: f64, gamma: f64) -> Result<f64, EstimatorError> {
    mean(&per_round_terms(
        EstimatorFamily::DRLambda,
        task,
        Some(q_hat),
        Hyperparams::SubGaussian { lambda, gamma },
    )?)
}

pub fn dros_estimate(task: &OpeTask, q_hat: ArrayView2<f64>, lambda: f64) -> Result<f64, EstimatorError> {
    mean(&per_round_terms(EstimatorFamily::DRos, task, Some(q_hat), Hyperparams::Threshold(lambda))?)
}

pub fn switch_estimate(task: &OpeTask, q_hat: ArrayView2<f64>, lambda: f64) -> Result<f64, EstimatorError> {
    mean(&per_round_terms(EstimatorFamily::SwitchDR, task, Some(q_hat), Hyperparams::Threshold(lambda))?)
}

/// Evaluates `spec` with explicit hyperparameters.
pub fn estimate(
    spec: &EstimatorSpec,
    task: &OpeTask,
    q_hat: Option<ArrayView2<f64>>,
    hyper: Hyperparams,
) -> Result<f64, EstimatorError> {
    let need_q = || q_hat.ok_or_else(|| EstimatorError::MissingRewardModel(spec.id()));
    match spec.family() {
        EstimatorFamily::SNIPS => snips_estimate(task),
        EstimatorFamily::SNDR => sndr_estimate(task, need_q()?),
        EstimatorFamily::DM => dm_estimate(task, need_q()?),
        family => mean(&per_round_terms(family, task, q_hat, hyper)?),
    }
}
