//! The 43 meta-features of an (estimator, task) pair: 10 policy-independent,
//! 24 policy-dependent and 9 estimator flags, in that order.
//!
//! Moments use population normalization and logarithms are natural. Per-context
//! distances are averaged over the logged contexts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::OpeTask;
use crate::estimators::{EstimatorSpec, FLAG_NAMES};

pub const N_FEATURES: usize = 43;
pub const N_POLICY_INDEPENDENT: usize = 10;
pub const N_POLICY_DEPENDENT: usize = 24;
pub const N_ESTIMATOR_FLAGS: usize = 9;
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

/// Value used for a feature whose formula is undefined or overflows.
pub const FEATURE_CAP: f64 = 1e10;

/// Importance weights above this count toward `n_clipped_w10`.
pub const CLIP_THRESHOLD: f64 = 10.0;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "n_rounds",
    "n_actions",
    "n_deficient_actions",
    "dim_context",
    "action_variance",
    "reward_mean",
    "reward_std",
    "reward_skewness",
    "reward_kurtosis",
    "context_variance",
    "max_mean_pi_b",
    "min_mean_pi_b",
    "max_mean_pi_e",
    "min_mean_pi_e",
    "max_w",
    "mean_w",
    "n_clipped_w10",
    "total_variation",
    "neyman",
    "pearson",
    "inner_product",
    "chebyshev",
    "divergence",
    "canberra",
    "k_b_e",
    "k_e_b",
    "jensen_shannon",
    "kl_b_e",
    "kl_e_b",
    "kumar_johnson",
    "additive_symmetric_chi2",
    "euclidean",
    "kulczynski",
    "city_block",
    FLAG_NAMES[0],
    FLAG_NAMES[1],
    FLAG_NAMES[2],
    FLAG_NAMES[3],
    FLAG_NAMES[4],
    FLAG_NAMES[5],
    FLAG_NAMES[6],
    FLAG_NAMES[7],
    FLAG_NAMES[8],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureGroup {
    PolicyIndependent,
    PolicyDependent,
    Estimator,
}

impl FeatureGroup {
    pub fn of(index: usize) -> FeatureGroup {
        if index < N_POLICY_INDEPENDENT {
            FeatureGroup::PolicyIndependent
        } else if index < N_POLICY_INDEPENDENT + N_POLICY_DEPENDENT {
            FeatureGroup::PolicyDependent
        } else {
            FeatureGroup::Estimator
        }
    }
}

/// True for the binary estimator flags.
pub fn is_categorical(index: usize) -> bool {
    FeatureGroup::of(index) == FeatureGroup::Estimator
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("zero {which} propensity in round {round}, action {action}")]
    NoSupport { which: &'static str, round: usize, action: usize },
    #[error("empty task")]
    Empty,
    #[error("feature vector must have {N_FEATURES} entries, got {0}")]
    Length(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, FeatureError> {
        if values.len() != N_FEATURES {
            return Err(FeatureError::Length(values.len()));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        FEATURE_CAP
    }
}

fn population_moments(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Population skewness; 0 when the variance is 0.
pub fn skewness(xs: &[f64]) -> f64 {
    let (mean, var) = population_moments(xs.iter().copied());
    if var <= 0.0 {
        return 0.0;
    }
    let sd = var.sqrt();
    xs.iter().map(|x| ((x - mean) / sd).powi(3)).sum::<f64>() / xs.len() as f64
}

/// Population (non-excess) kurtosis; 0 when the variance is 0.
pub fn kurtosis(xs: &[f64]) -> f64 {
    let (mean, var) = population_moments(xs.iter().copied());
    if var <= 0.0 {
        return 0.0;
    }
    let sd = var.sqrt();
    xs.iter().map(|x| ((x - mean) / sd).powi(4)).sum::<f64>() / xs.len() as f64
}

pub fn extract_policy_independent(task: &OpeTask) -> Result<[f64; N_POLICY_INDEPENDENT], FeatureError> {
    let n = task.n_rounds();
    if n == 0 {
        return Err(FeatureError::Empty);
    }
    let k = task.n_actions();
    let mut seen = vec![false; k];
    for &a in task.actions() {
        seen[a] = true;
    }
    let n_def = seen.iter().filter(|s| !**s).count();
    let (_, action_var) = population_moments(task.actions().iter().map(|&a| a as f64));
    let rewards = task.rewards();
    let (r_mean, r_var) = population_moments(rewards.iter().copied());
    let contexts = task.logging().contexts();
    let ctx_var: f64 = contexts
        .columns()
        .into_iter()
        .map(|c| population_moments(c.iter().copied()).1)
        .sum();
    Ok([
        n as f64,
        k as f64,
        n_def as f64,
        task.dim_context() as f64,
        action_var,
        r_mean,
        r_var.sqrt(),
        skewness(rewards),
        kurtosis(rewards),
        ctx_var,
    ]
    .map(sanitize))
}

fn check_support(task: &OpeTask) -> Result<(), FeatureError> {
    let pb = task.logging().propensities();
    let pe = task.evaluation();
    for ((t, a), &p) in pb.indexed_iter() {
        if p <= 0.0 {
            return Err(FeatureError::NoSupport { which: "logging", round: t, action: a });
        }
        if pe[[t, a]] <= 0.0 {
            return Err(FeatureError::NoSupport { which: "evaluation", round: t, action: a });
        }
    }
    Ok(())
}

/// Distances between two action distributions on one context, in feature
/// order starting at `total_variation`.
pub fn context_distances(b: &[f64], e: &[f64]) -> [f64; 17] {
    let mut out = [0.0; 17];
    let (mut tv, mut neyman, mut pearson, mut inner, mut cheb) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    let (mut div, mut canb, mut kbe, mut keb, mut klbe, mut kleb) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut kj, mut add, mut sq, mut abs_sum, mut min_sum) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&p, &q) in b.iter().zip(e) {
        let diff = p - q;
        let ad = diff.abs();
        let s = p + q;
        tv += 0.5 * ad;
        neyman += diff * diff / p;
        pearson += diff * diff / q;
        inner += p * q;
        cheb = cheb.max(ad);
        div += 2.0 * diff * diff / (s * s);
        canb += ad / s;
        kbe += p * (2.0 * p / s).ln();
        keb += q * (2.0 * q / s).ln();
        klbe += p * (p / q).ln();
        kleb += q * (q / p).ln();
        kj += (p * p - q * q).powi(2) / (2.0 * (p * q).powf(1.5));
        add += diff * diff * s / (p * q);
        sq += diff * diff;
        abs_sum += ad;
        min_sum += p.min(q);
    }
    let kulczynski = if min_sum > 0.0 { abs_sum / min_sum } else { FEATURE_CAP };
    out.copy_from_slice(&[
        tv,
        neyman,
        pearson,
        inner,
        cheb,
        div,
        canb,
        kbe,
        keb,
        0.5 * (kbe + keb),
        klbe,
        kleb,
        kj,
        add,
        sq.sqrt(),
        kulczynski,
        abs_sum,
    ]);
    out
}

pub fn extract_policy_dependent(task: &OpeTask) -> Result<[f64; N_POLICY_DEPENDENT], FeatureError> {
    let n = task.n_rounds();
    if n == 0 {
        return Err(FeatureError::Empty);
    }
    check_support(task)?;
    let pb = task.logging().propensities();
    let pe = task.evaluation();
    let k = task.n_actions();
    let nf = n as f64;

    let mean_b: Vec<f64> = (0..k).map(|a| pb.column(a).sum() / nf).collect();
    let mean_e: Vec<f64> = (0..k).map(|a| pe.column(a).sum() / nf).collect();
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);

    let mut max_inv = f64::NEG_INFINITY;
    let mut w_sum = 0.0;
    let mut clipped = 0usize;
    for t in 0..n {
        let b = task.logging().chosen_propensity(t);
        let e = task.chosen_evaluation(t);
        max_inv = max_inv.max(b / e);
        let w = e / b;
        w_sum += w;
        if w > CLIP_THRESHOLD {
            clipped += 1;
        }
    }

    let mut dist = [0.0; 17];
    let mut b = vec![0.0; k];
    let mut e = vec![0.0; k];
    for t in 0..n {
        b.iter_mut().zip(pb.row(t)).for_each(|(d, s)| *d = *s);
        e.iter_mut().zip(pe.row(t)).for_each(|(d, s)| *d = *s);
        for (acc, v) in dist.iter_mut().zip(context_distances(&b, &e)) {
            *acc += v;
        }
    }

    let mut out = [0.0; N_POLICY_DEPENDENT];
    out[..7].copy_from_slice(&[
        max(&mean_b),
        min(&mean_b),
        max(&mean_e),
        min(&mean_e),
        max_inv,
        w_sum / nf,
        clipped as f64,
    ]);
    for (o, d) in out[7..].iter_mut().zip(dist) {
        *o = d / nf;
    }
    Ok(out.map(sanitize))
}

pub fn extract_estimator_flags(spec: &EstimatorSpec) -> [f64; N_ESTIMATOR_FLAGS] {
    spec.flags().map(|f| if f { 1.0 } else { 0.0 })
}

/// The 34 task features shared by every candidate.
pub fn extract_task_features(task: &OpeTask) -> Result<Vec<f64>, FeatureError> {
    let mut v = Vec::with_capacity(N_FEATURES);
    v.extend(extract_policy_independent(task)?);
    v.extend(extract_policy_dependent(task)?);
    Ok(v)
}

pub fn with_estimator(task_features: &[f64], spec: &EstimatorSpec) -> FeatureVector {
    let mut v = task_features.to_vec();
    v.extend(extract_estimator_flags(spec));
    FeatureVector(v)
}

pub fn extract_all(spec: &EstimatorSpec, task: &OpeTask) -> Result<FeatureVector, FeatureError> {
    Ok(with_estimator(&extract_task_features(task)?, spec))
}
