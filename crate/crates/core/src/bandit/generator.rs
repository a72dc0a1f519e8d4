//! Synthetic OPE task generator.
//!
//! A task is drawn from a parameter space (number of actions, rounds, context
//! dimension, reward function family, inverse temperatures and policy function
//! families). Each parameter draw fixes a [`SyntheticEnvironment`]; the
//! environment then yields any number of logging realizations plus one large
//! ground-truth dataset collected under the evaluation policy.
//!
//! Reward functions are `q(x, a) = σ(x̃ᵀ M ã + θ_xᵀ x̃ + θ_aᵀ ã)` where `x̃` and
//! `ã` are polynomial expansions of the context and of the one-hot action.
//! Policy scores are `f(x, a) = x̃ᵀ M ã + θ_aᵀ ã` (or `q` itself for the
//! reward-proportional family) and policies are `softmax_a(β · f(x, a))`.
//!
//! Polynomial terms are enumerated in graded lexicographic order: the empty
//! (bias) term, then degree-1 terms by index, then degree-2 multisets in
//! lexicographic order, and so on. Coefficients are i.i.d. `U(-1, 1)`.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::types::{BanditError, GroundTruthDataset, LoggingDataset, OpeTask};
use crate::rng::{self, hash_unit, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardFnKind {
    Logistic,
    LogisticPolynomial,
    LogisticSparse,
    UniformRandom,
}

impl RewardFnKind {
    pub const ALL: [RewardFnKind; 4] = [
        RewardFnKind::Logistic,
        RewardFnKind::LogisticPolynomial,
        RewardFnKind::LogisticSparse,
        RewardFnKind::UniformRandom,
    ];

    fn degree(self) -> usize {
        match self {
            RewardFnKind::LogisticPolynomial => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyFnKind {
    Linear,
    Polynomial,
    /// Scores are the expected rewards themselves.
    RewardProportional,
}

impl PolicyFnKind {
    pub const ALL: [PolicyFnKind; 3] =
        [PolicyFnKind::Linear, PolicyFnKind::Polynomial, PolicyFnKind::RewardProportional];

    fn tag(self) -> u64 {
        match self {
            PolicyFnKind::Linear => 1,
            PolicyFnKind::Polynomial => 3,
            PolicyFnKind::RewardProportional => 0,
        }
    }
}

/// Inverse temperature of the logging policy. With a pair, the first half of
/// the rounds (rounded up) is logged under the first value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LoggingBeta {
    Single(f64),
    Pair(f64, f64),
}

impl LoggingBeta {
    pub fn is_pair(&self) -> bool {
        matches!(self, LoggingBeta::Pair(..))
    }

    pub fn for_round(&self, t: usize, n_rounds: usize) -> f64 {
        match *self {
            LoggingBeta::Single(b) => b,
            LoggingBeta::Pair(b1, b2) => {
                if t < n_rounds.div_ceil(2) {
                    b1
                } else {
                    b2
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGenParams {
    pub n_actions: usize,
    pub n_rounds: usize,
    pub dim_context: usize,
    pub reward_fn: RewardFnKind,
    pub beta_b: LoggingBeta,
    pub beta_e: f64,
    pub policy_fn_b: PolicyFnKind,
    pub policy_fn_e: PolicyFnKind,
    pub n_gen: usize,
    pub n_gt: usize,
    pub seed: u64,
}

impl TaskGenParams {
    pub fn validate(&self) -> Result<(), BanditError> {
        let bad = |m: &str| Err(BanditError::InvalidParams(m.to_string()));
        if self.n_actions < 2 {
            return bad("n_actions must be at least 2");
        }
        if self.n_rounds == 0 || self.dim_context == 0 {
            return bad("n_rounds and dim_context must be positive");
        }
        if self.n_gen == 0 || self.n_gt == 0 {
            return bad("n_gen and n_gt must be positive");
        }
        let betas = match self.beta_b {
            LoggingBeta::Single(b) => vec![b, self.beta_e],
            LoggingBeta::Pair(a, b) => vec![a, b, self.beta_e],
        };
        if betas.iter().any(|b| !b.is_finite()) {
            return bad("inverse temperatures must be finite");
        }
        Ok(())
    }
}

/// Distributions each generator parameter is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpace {
    pub n_actions: (usize, usize),
    pub n_rounds: (usize, usize),
    pub dim_context: (usize, usize),
    pub beta_bound: f64,
    pub reward_fns: Vec<RewardFnKind>,
    pub policy_fns: Vec<PolicyFnKind>,
    /// Probability that a task is logged by two policies.
    pub dual_logging_probability: f64,
    pub n_gen: usize,
    pub n_gt: usize,
}

impl Default for GeneratorSpace {
    fn default() -> Self {
        Self {
            n_actions: (2, 20),
            n_rounds: (100, 8000),
            dim_context: (1, 10),
            beta_bound: 10.0,
            reward_fns: RewardFnKind::ALL.to_vec(),
            policy_fns: PolicyFnKind::ALL.to_vec(),
            dual_logging_probability: 0.5,
            n_gen: 10,
            n_gt: 100_000,
        }
    }
}

impl GeneratorSpace {
    pub fn sample(&self, seed: u64) -> TaskGenParams {
        let mut rng = stream(seed, &[rng::TAG_PARAMS]);
        let n_actions = rng.random_range(self.n_actions.0..=self.n_actions.1);
        let n_rounds = rng.random_range(self.n_rounds.0..=self.n_rounds.1);
        let dim_context = rng.random_range(self.dim_context.0..=self.dim_context.1);
        let reward_fn = self.reward_fns[rng.random_range(0..self.reward_fns.len())];
        let bound = self.beta_bound;
        let dual = rng.random_bool(self.dual_logging_probability);
        let b1 = rng.random_range(-bound..bound);
        let beta_b = if dual {
            LoggingBeta::Pair(b1, rng.random_range(-bound..bound))
        } else {
            LoggingBeta::Single(b1)
        };
        let beta_e = rng.random_range(-bound..bound);
        let policy_fn_b = self.policy_fns[rng.random_range(0..self.policy_fns.len())];
        let policy_fn_e = self.policy_fns[rng.random_range(0..self.policy_fns.len())];
        TaskGenParams {
            n_actions,
            n_rounds,
            dim_context,
            reward_fn,
            beta_b,
            beta_e,
            policy_fn_b,
            policy_fn_e,
            n_gen: self.n_gen,
            n_gt: self.n_gt,
            seed,
        }
    }
}

/// Draws task parameters from the default space.
pub fn sample_task_params(seed: u64) -> TaskGenParams {
    GeneratorSpace::default().sample(seed)
}

/// All monomials of degree ≤ `degree` over `n_vars` variables, as sorted
/// index multisets, in graded lexicographic order.
pub fn polynomial_terms(n_vars: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut terms = vec![Vec::new()];
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..degree {
        let mut next = Vec::new();
        for term in &frontier {
            let start = term.last().copied().unwrap_or(0);
            for v in start..n_vars {
                let mut t = term.clone();
                t.push(v);
                next.push(t);
            }
        }
        terms.extend(next.iter().cloned());
        frontier = next;
    }
    terms
}

/// Evaluates every monomial of `terms` at `values`.
pub fn expand(terms: &[Vec<usize>], values: &[f64]) -> Vec<f64> {
    terms.iter().map(|t| t.iter().map(|&i| values[i]).product()).collect()
}

/// One polynomial bilinear-plus-linear function instance.
#[derive(Debug, Clone)]
pub struct PolyFunction {
    degree: usize,
    dim_context: usize,
    n_actions: usize,
    x_terms: Vec<Vec<usize>>,
    a_terms: Vec<Vec<usize>>,
    x_mask: Vec<bool>,
    a_mask: Vec<bool>,
    interaction: Array2<f64>,
    theta_x: Vec<f64>,
    theta_a: Vec<f64>,
    // Cached per-action reductions: for a one-hot action only the bias term
    // and the pure powers of that action are nonzero in ã.
    action_vectors: Array2<f64>,
    action_offsets: Vec<f64>,
}

impl PolyFunction {
    /// Builds a function from explicit coefficients. Masks select which
    /// expansion terms are active; inactive terms are treated as zero.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        degree: usize,
        dim_context: usize,
        n_actions: usize,
        interaction: Array2<f64>,
        theta_x: Vec<f64>,
        theta_a: Vec<f64>,
        x_mask: Option<Vec<bool>>,
        a_mask: Option<Vec<bool>>,
    ) -> Result<Self, BanditError> {
        let x_terms = polynomial_terms(dim_context, degree);
        let a_terms = polynomial_terms(n_actions, degree);
        let (px, pa) = (x_terms.len(), a_terms.len());
        if interaction.dim() != (px, pa) || theta_x.len() != px || theta_a.len() != pa {
            return Err(BanditError::Dimension(format!(
                "expected coefficient shapes ({px}x{pa}, {px}, {pa})"
            )));
        }
        let x_mask = x_mask.unwrap_or_else(|| vec![true; px]);
        let a_mask = a_mask.unwrap_or_else(|| vec![true; pa]);
        if x_mask.len() != px || a_mask.len() != pa {
            return Err(BanditError::Dimension("mask length".into()));
        }
        let mut f = Self {
            degree,
            dim_context,
            n_actions,
            x_terms,
            a_terms,
            x_mask,
            a_mask,
            interaction,
            theta_x,
            theta_a,
            action_vectors: Array2::zeros((n_actions, px)),
            action_offsets: vec![0.0; n_actions],
        };
        f.rebuild_cache();
        Ok(f)
    }

    fn random(
        degree: usize,
        dim_context: usize,
        n_actions: usize,
        sparse: bool,
        seed: u64,
        tag: &[u64],
    ) -> Self {
        let px = polynomial_terms(dim_context, degree).len();
        let pa = polynomial_terms(n_actions, degree).len();
        let mut rng = stream(seed, tag);
        let interaction = Array2::from_shape_fn((px, pa), |_| rng.random_range(-1.0..1.0));
        let theta_x = (0..px).map(|_| rng.random_range(-1.0..1.0)).collect();
        let theta_a = (0..pa).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (x_mask, a_mask) = if sparse {
            let mut mrng = stream(seed, &[rng::TAG_SPARSE_MASK]);
            (Some(sparse_mask(px, &mut mrng)), Some(sparse_mask(pa, &mut mrng)))
        } else {
            (None, None)
        };
        Self::from_parts(degree, dim_context, n_actions, interaction, theta_x, theta_a, x_mask, a_mask)
            .expect("shapes are consistent by construction")
    }

    fn rebuild_cache(&mut self) {
        let px = self.x_terms.len();
        for a in 0..self.n_actions {
            let mut offset = 0.0;
            let mut vec = vec![0.0; px];
            for (j, term) in self.a_terms.iter().enumerate() {
                if !self.a_mask[j] || !term.iter().all(|&i| i == a) {
                    continue;
                }
                offset += self.theta_a[j];
                for (i, v) in vec.iter_mut().enumerate() {
                    if self.x_mask[i] {
                        *v += self.interaction[[i, j]];
                    }
                }
            }
            self.action_vectors.row_mut(a).assign(&ArrayView1::from(&vec));
            self.action_offsets[a] = offset;
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn x_terms(&self) -> &[Vec<usize>] {
        &self.x_terms
    }

    pub fn a_terms(&self) -> &[Vec<usize>] {
        &self.a_terms
    }

    pub fn x_mask(&self) -> &[bool] {
        &self.x_mask
    }

    pub fn a_mask(&self) -> &[bool] {
        &self.a_mask
    }

    pub fn interaction(&self) -> ArrayView2<'_, f64> {
        self.interaction.view()
    }

    pub fn theta_x(&self) -> &[f64] {
        &self.theta_x
    }

    pub fn theta_a(&self) -> &[f64] {
        &self.theta_a
    }

    fn expanded_context(&self, context: ArrayView1<f64>) -> Vec<f64> {
        let x: Vec<f64> = context.iter().copied().collect();
        let mut xt = expand(&self.x_terms, &x);
        for (v, &keep) in xt.iter_mut().zip(&self.x_mask) {
            if !keep {
                *v = 0.0;
            }
        }
        xt
    }

    /// Scores of every action on one context. `with_context_term` adds θ_xᵀx̃.
    fn scores_into(&self, context: ArrayView1<f64>, with_context_term: bool, out: &mut [f64]) {
        let xt = self.expanded_context(context);
        let base = if with_context_term {
            xt.iter().zip(&self.theta_x).map(|(a, b)| a * b).sum()
        } else {
            0.0
        };
        for (a, slot) in out.iter_mut().enumerate() {
            let row = self.action_vectors.row(a);
            let dot: f64 = xt.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
            *slot = base + dot + self.action_offsets[a];
        }
    }

    fn score_matrix(&self, contexts: ArrayView2<f64>, with_context_term: bool) -> Array2<f64> {
        let mut out = Array2::zeros((contexts.nrows(), self.n_actions));
        for (t, ctx) in contexts.axis_iter(Axis(0)).enumerate() {
            let row = out.row_mut(t).into_slice().expect("row-major output");
            self.scores_into(ctx, with_context_term, row);
        }
        out
    }
}

fn sparse_mask<R: Rng>(len: usize, rng: &mut R) -> Vec<bool> {
    let keep = ((len as f64) * 0.1).ceil() as usize;
    let mut mask = vec![false; len];
    for i in sample_indices(rng, len, keep.min(len)).into_iter() {
        mask[i] = true;
    }
    mask
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax of `beta · scores` with max subtraction. Entries that
/// underflow are floored at the smallest positive normal double so the
/// distribution keeps full support.
pub fn softmax_rows(scores: ArrayView2<f64>, betas: impl Fn(usize) -> f64) -> Array2<f64> {
    let mut out = Array2::zeros(scores.dim());
    for (t, row) in scores.axis_iter(Axis(0)).enumerate() {
        let beta = betas(t);
        let max = row.iter().map(|s| beta * s).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (a, s) in row.iter().enumerate() {
            let e = (beta * s - max).exp();
            out[[t, a]] = e;
            total += e;
        }
        for a in 0..row.len() {
            out[[t, a]] = (out[[t, a]] / total).max(f64::MIN_POSITIVE);
        }
    }
    out
}

/// Reward and policy functions for one parameter draw.
#[derive(Debug, Clone)]
pub struct SyntheticEnvironment {
    seed: u64,
    n_actions: usize,
    dim_context: usize,
    reward_kind: RewardFnKind,
    reward_fn: Option<PolyFunction>,
    linear_policy: Option<PolyFunction>,
    polynomial_policy: Option<PolyFunction>,
}

impl SyntheticEnvironment {
    pub fn new(params: &TaskGenParams) -> Result<Self, BanditError> {
        params.validate()?;
        let (seed, d, k) = (params.seed, params.dim_context, params.n_actions);
        let reward_fn = match params.reward_fn {
            RewardFnKind::UniformRandom => None,
            kind => Some(PolyFunction::random(
                kind.degree(),
                d,
                k,
                kind == RewardFnKind::LogisticSparse,
                seed,
                &[rng::TAG_ENV_REWARD],
            )),
        };
        let uses = |kind| params.policy_fn_b == kind || params.policy_fn_e == kind;
        let policy = |kind: PolicyFnKind| {
            uses(kind).then(|| {
                PolyFunction::random(kind.tag() as usize, d, k, false, seed, &[rng::TAG_ENV_POLICY, kind.tag()])
            })
        };
        Ok(Self {
            seed,
            n_actions: k,
            dim_context: d,
            reward_kind: params.reward_fn,
            reward_fn,
            linear_policy: policy(PolicyFnKind::Linear),
            polynomial_policy: policy(PolicyFnKind::Polynomial),
        })
    }

    /// Environment with an explicit reward function, for tests and custom
    /// experiments. Policies of the polynomial families are unavailable.
    pub fn with_reward_function(seed: u64, kind: RewardFnKind, reward_fn: PolyFunction) -> Self {
        Self {
            seed,
            n_actions: reward_fn.n_actions,
            dim_context: reward_fn.dim_context,
            reward_kind: kind,
            reward_fn: Some(reward_fn),
            linear_policy: None,
            polynomial_policy: None,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim_context(&self) -> usize {
        self.dim_context
    }

    pub fn reward_kind(&self) -> RewardFnKind {
        self.reward_kind
    }

    pub fn reward_function(&self) -> Option<&PolyFunction> {
        self.reward_fn.as_ref()
    }

    pub fn policy_function(&self, kind: PolicyFnKind) -> Option<&PolyFunction> {
        match kind {
            PolicyFnKind::Linear => self.linear_policy.as_ref(),
            PolicyFnKind::Polynomial => self.polynomial_policy.as_ref(),
            PolicyFnKind::RewardProportional => None,
        }
    }

    fn uniform_reward(&self, context: ArrayView1<f64>, action: usize) -> f64 {
        let mut key: Vec<u64> = Vec::with_capacity(context.len() + 2);
        key.push(rng::TAG_UNIFORM_REWARD);
        key.extend(context.iter().map(|v| v.to_bits()));
        key.push(action as u64);
        hash_unit(self.seed, &key)
    }

    /// q(x, a).
    pub fn expected_reward(&self, context: ArrayView1<f64>, action: usize) -> Result<f64, BanditError> {
        if context.len() != self.dim_context {
            return Err(BanditError::Dimension(format!(
                "context has {} components, environment expects {}",
                context.len(),
                self.dim_context
            )));
        }
        if action >= self.n_actions {
            return Err(BanditError::ActionOutOfRange { round: 0, action, n_actions: self.n_actions });
        }
        Ok(match &self.reward_fn {
            None => self.uniform_reward(context, action),
            Some(f) => {
                let mut scores = vec![0.0; self.n_actions];
                f.scores_into(context, true, &mut scores);
                sigmoid(scores[action])
            }
        })
    }

    /// q(x, a) for every context row and action.
    pub fn expected_rewards(&self, contexts: ArrayView2<f64>) -> Array2<f64> {
        match &self.reward_fn {
            None => Array2::from_shape_fn((contexts.nrows(), self.n_actions), |(t, a)| {
                self.uniform_reward(contexts.row(t), a)
            }),
            Some(f) => f.score_matrix(contexts, true).mapv(sigmoid),
        }
    }

    /// f(x, a) for every context row and action. `expected` is reused by the
    /// reward-proportional family when already computed.
    pub fn policy_scores(
        &self,
        kind: PolicyFnKind,
        contexts: ArrayView2<f64>,
        expected: Option<&Array2<f64>>,
    ) -> Result<Array2<f64>, BanditError> {
        if contexts.ncols() != self.dim_context {
            return Err(BanditError::Dimension("context dimension".into()));
        }
        match kind {
            PolicyFnKind::RewardProportional => Ok(match expected {
                Some(q) => q.clone(),
                None => self.expected_rewards(contexts),
            }),
            other => self
                .policy_function(other)
                .map(|f| f.score_matrix(contexts, false))
                .ok_or_else(|| {
                    BanditError::InvalidParams(format!("environment has no {other:?} policy function"))
                }),
        }
    }
}

/// softmax_a(β · f(x, a)) for every context row.
pub fn policy_distribution(
    env: &SyntheticEnvironment,
    kind: PolicyFnKind,
    beta: f64,
    contexts: ArrayView2<f64>,
) -> Result<Array2<f64>, BanditError> {
    let scores = env.policy_scores(kind, contexts, None)?;
    Ok(softmax_rows(scores.view(), |_| beta))
}

fn sample_contexts<R: Rng>(rng: &mut R, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal))
}

/// Inverse-CDF draw from a discrete distribution.
pub fn sample_categorical<R: Rng>(rng: &mut R, probs: ArrayView1<f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    // Rounding left a sliver above the cumulative sum.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Generator bound to one parameter draw.
#[derive(Debug, Clone)]
pub struct TaskGenerator {
    params: TaskGenParams,
    env: SyntheticEnvironment,
}

impl TaskGenerator {
    pub fn new(params: TaskGenParams) -> Result<Self, BanditError> {
        let env = SyntheticEnvironment::new(&params)?;
        Ok(Self { params, env })
    }

    pub fn params(&self) -> &TaskGenParams {
        &self.params
    }

    pub fn environment(&self) -> &SyntheticEnvironment {
        &self.env
    }

    /// Dataset of `n_gt` rounds collected under the evaluation policy.
    pub fn ground_truth(&self) -> Result<GroundTruthDataset, BanditError> {
        let p = &self.params;
        let mut rng = stream(p.seed, &[rng::TAG_GROUND_TRUTH]);
        let contexts = sample_contexts(&mut rng, p.n_gt, p.dim_context);
        let q = self.env.expected_rewards(contexts.view());
        let scores = self.env.policy_scores(p.policy_fn_e, contexts.view(), Some(&q))?;
        let pi_e = softmax_rows(scores.view(), |_| p.beta_e);
        let mut actions = Vec::with_capacity(p.n_gt);
        let mut rewards = Vec::with_capacity(p.n_gt);
        for t in 0..p.n_gt {
            let a = sample_categorical(&mut rng, pi_e.row(t));
            actions.push(a);
            rewards.push(if rng.random_bool(q[[t, a]]) { 1.0 } else { 0.0 });
        }
        GroundTruthDataset::new(contexts, q, pi_e, actions, rewards)
    }

    /// One logging realization with the evaluation policy attached.
    pub fn logging_task(&self, realization: u64) -> Result<OpeTask, BanditError> {
        let p = &self.params;
        let mut rng = stream(p.seed, &[rng::TAG_LOGGING, realization]);
        let n = p.n_rounds;
        let contexts = sample_contexts(&mut rng, n, p.dim_context);
        let q = self.env.expected_rewards(contexts.view());
        let scores_b = self.env.policy_scores(p.policy_fn_b, contexts.view(), Some(&q))?;
        let pi_b = softmax_rows(scores_b.view(), |t| p.beta_b.for_round(t, n));
        let scores_e = if p.policy_fn_e == p.policy_fn_b {
            scores_b
        } else {
            self.env.policy_scores(p.policy_fn_e, contexts.view(), Some(&q))?
        };
        let pi_e = softmax_rows(scores_e.view(), |_| p.beta_e);
        let mut actions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for t in 0..n {
            let a = sample_categorical(&mut rng, pi_b.row(t));
            actions.push(a);
            rewards.push(if rng.random_bool(q[[t, a]]) { 1.0 } else { 0.0 });
        }
        let logging = LoggingDataset::new(contexts, actions, rewards, pi_b)?;
        OpeTask::new(logging, pi_e)
    }
}

/// Generates realization `realization` of the task described by `params`
/// together with its ground-truth dataset.
pub fn generate_ope_task(
    params: &TaskGenParams,
    realization: u64,
) -> Result<(OpeTask, GroundTruthDataset), BanditError> {
    let generator = TaskGenerator::new(params.clone())?;
    Ok((generator.logging_task(realization)?, generator.ground_truth()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::types::true_policy_value;
    use ndarray::array;

    fn params(seed: u64) -> TaskGenParams {
        TaskGenParams {
            n_actions: 4,
            n_rounds: 100,
            dim_context: 3,
            reward_fn: RewardFnKind::Logistic,
            beta_b: LoggingBeta::Single(1.0),
            beta_e: 0.0,
            policy_fn_b: PolicyFnKind::Linear,
            policy_fn_e: PolicyFnKind::Polynomial,
            n_gen: 1,
            n_gt: 500,
            seed,
        }
    }

    #[test]
    fn term_enumeration_is_graded_lexicographic() {
        let terms = polynomial_terms(2, 2);
        let expected: Vec<Vec<usize>> =
            vec![vec![], vec![0], vec![1], vec![0, 0], vec![0, 1], vec![1, 1]];
        assert_eq!(terms, expected);
        // C(n + p, p) terms in total.
        assert_eq!(polynomial_terms(10, 3).len(), 286);
        assert_eq!(polynomial_terms(20, 1).len(), 21);
    }

    #[test]
    fn sampled_params_respect_ranges() {
        for seed in 0..500 {
            let p = sample_task_params(seed);
            assert!((2..=20).contains(&p.n_actions));
            assert!((100..=8000).contains(&p.n_rounds));
            assert!((1..=10).contains(&p.dim_context));
            assert!(p.beta_e.abs() < 10.0);
            assert_eq!(p.seed, seed);
        }
        assert_eq!(sample_task_params(42), sample_task_params(42));
    }

    #[test]
    fn dual_logging_fraction_concentrates() {
        // Binomial(10_000, 1/2): 0.05 is 10 standard deviations.
        let dual = (0..10_000u64).filter(|&s| sample_task_params(s).beta_b.is_pair()).count();
        let frac = dual as f64 / 10_000.0;
        assert!((0.45..=0.55).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn zero_coefficients_give_one_half() {
        let f = PolyFunction::from_parts(
            1,
            2,
            3,
            Array2::zeros((3, 4)),
            vec![0.0; 3],
            vec![0.0; 4],
            None,
            None,
        )
        .unwrap();
        let env = SyntheticEnvironment::with_reward_function(0, RewardFnKind::Logistic, f);
        for a in 0..3 {
            assert_eq!(env.expected_reward(array![0.3, -1.2].view(), a).unwrap(), 0.5);
        }
    }

    #[test]
    fn expected_reward_rejects_bad_dimensions() {
        let env = SyntheticEnvironment::new(&params(1)).unwrap();
        assert!(env.expected_reward(array![1.0].view(), 0).is_err());
        assert!(env.expected_reward(array![1.0, 2.0, 3.0].view(), 4).is_err());
    }

    #[test]
    fn uniform_reward_is_a_fixed_function() {
        let mut p = params(5);
        p.reward_fn = RewardFnKind::UniformRandom;
        let env = SyntheticEnvironment::new(&p).unwrap();
        let x = array![0.1, 0.2, 0.3];
        let a = env.expected_reward(x.view(), 2).unwrap();
        assert_eq!(a, env.expected_reward(x.view(), 2).unwrap());
        assert!((0.0..1.0).contains(&a));
        assert_ne!(a, env.expected_reward(x.view(), 1).unwrap());
    }

    #[test]
    fn softmax_limits() {
        let scores = array![[0.1, 0.5, -0.3], [2.0, 1.0, 0.0]];
        let uniform = softmax_rows(scores.view(), |_| 0.0);
        assert!(uniform.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        let sharp = softmax_rows(scores.view(), |_| 1000.0);
        assert!(sharp[[0, 1]] >= 0.999 && sharp[[1, 0]] >= 0.999);
        for row in sharp.axis_iter(Axis(0)) {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn negating_beta_reverses_ranking() {
        let scores = array![[0.3, -0.7, 1.1, 0.2]];
        let pos = softmax_rows(scores.view(), |_| 2.0);
        let neg = softmax_rows(scores.view(), |_| -2.0);
        let mut order_pos: Vec<usize> = (0..4).collect();
        order_pos.sort_by(|&a, &b| pos[[0, b]].total_cmp(&pos[[0, a]]));
        let mut order_neg: Vec<usize> = (0..4).collect();
        order_neg.sort_by(|&a, &b| neg[[0, a]].total_cmp(&neg[[0, b]]));
        assert_eq!(order_pos, order_neg);
    }

    #[test]
    fn logging_task_shape_and_determinism() {
        let g = TaskGenerator::new(params(9)).unwrap();
        let t1 = g.logging_task(0).unwrap();
        let t2 = g.logging_task(0).unwrap();
        let t3 = g.logging_task(1).unwrap();
        assert_eq!(t1, t2);
        assert_ne!(t1, t3);
        assert_eq!(t1.n_rounds(), 100);
        assert!(t1.logging().has_full_support());
        // beta_e = 0 gives a uniform evaluation policy.
        assert!(t1.evaluation().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn dual_logging_splits_rounds() {
        let mut p = params(3);
        p.n_rounds = 7;
        p.beta_b = LoggingBeta::Pair(0.0, 5.0);
        let task = TaskGenerator::new(p).unwrap().logging_task(0).unwrap();
        let pi = task.logging().propensities();
        for t in 0..4 {
            assert!(pi.row(t).iter().all(|&x| (x - 0.25).abs() < 1e-15));
        }
        for t in 4..7 {
            assert!(pi.row(t).iter().any(|&x| (x - 0.25).abs() > 1e-6));
        }
    }

    #[test]
    fn same_kind_and_beta_share_the_policy() {
        let mut p = params(11);
        p.policy_fn_e = PolicyFnKind::Linear;
        p.beta_e = 1.0;
        let task = TaskGenerator::new(p).unwrap().logging_task(0).unwrap();
        assert_eq!(task.logging().propensities(), task.evaluation());
    }

    #[test]
    fn ground_truth_value_in_unit_interval() {
        let gt = TaskGenerator::new(params(2)).unwrap().ground_truth().unwrap();
        let v = true_policy_value(&gt);
        assert!((0.0..=1.0).contains(&v));
        assert_eq!(gt.n_rounds(), 500);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = params(0);
        p.n_actions = 1;
        assert!(TaskGenerator::new(p).is_err());
    }
}
