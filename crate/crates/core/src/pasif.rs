//! PAS-IF baseline: a learned sampling rule ρ(x, a) splits the logging data
//! into pseudo logging and pseudo evaluation sets, and each estimator's MSE is
//! approximated by comparing its estimate on the former with the on-policy
//! mean of the latter.
//!
//! Pseudo policies: π̃_e(a|x) ∝ π_b(a|x)·ρ(x, a) and
//! π̃_b(a|x) ∝ π_b(a|x)·(1 − ρ(x, a)), normalized per context.
//! Regularizer: R = (mean_t ρ(x_t, a_t) − target)².

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{BanditError, LoggingDataset, OpeTask};
use crate::estimators::{enumerate_candidates, EstimatorError, EstimatorSpec};
use crate::rng::{derive_seed, stream, TAG_PASIF};
use crate::selection::{run_estimator, SelectionResult};

/// Keeps ρ strictly inside (0, 1) where the sigmoid saturates.
const RHO_EPS: f64 = 1e-12;
pub const MAX_SPLIT_ATTEMPTS: usize = 10;

#[derive(Debug, Error)]
pub enum PasifError {
    #[error("importance fitting diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("no split with both pseudo datasets nonempty after {0} attempts")]
    DegenerateSplit(usize),
    #[error("lambda must be nonnegative, got {0}")]
    Lambda(f64),
    #[error("empty lambda grid")]
    EmptyGrid,
    #[error("all lambda values diverged")]
    AllDiverged,
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Fully connected network with tanh hidden layers and a sigmoid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRuleNet {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl SamplingRuleNet {
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = stream(seed, &[TAG_PASIF]);
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            weights.push(Array2::from_shape_fn((w[0], w[1]), |_| dist.sample(&mut rng)));
            biases.push(Array1::zeros(w[1]));
        }
        Self { weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Weights then biases, layer by layer, row-major.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut i = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = p[i];
                i += 1;
            }
        }
    }

    /// Hidden activations of every layer plus output probabilities.
    fn forward_cache(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array1<f64>) {
        let mut acts = vec![x.to_owned()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = acts[l].dot(w) + b;
            if l < last {
                acts.push(z.mapv(f64::tanh));
            } else {
                let rho = z.column(0).mapv(|v| crate::bandit::sigmoid(v).clamp(RHO_EPS, 1.0 - RHO_EPS));
                return (acts, rho);
            }
        }
        unreachable!("network has an output layer")
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.forward_cache(x).1
    }

    /// Gradient of Σ_i g_i·ρ_i with respect to the flat parameters.
    fn backward(&self, acts: &[Array2<f64>], rho: &Array1<f64>, g: &Array1<f64>) -> Vec<f64> {
        let n_layers = self.weights.len();
        let mut grads_w: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        let mut grads_b: Vec<Array1<f64>> = Vec::with_capacity(n_layers);
        let dz_out = g * &rho.mapv(|r| r * (1.0 - r));
        let mut delta = dz_out.insert_axis(Axis(1));
        for l in (0..n_layers).rev() {
            grads_w.push(acts[l].t().dot(&delta));
            grads_b.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let back = delta.dot(&self.weights[l].t());
                delta = back * acts[l].mapv(|h| 1.0 - h * h);
            }
        }
        grads_w.reverse();
        grads_b.reverse();
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in grads_w.iter().zip(&grads_b) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// `[x ‖ one-hot(a)]` for every round and every action, row index `t·K + a`.
fn all_action_inputs(log: &LoggingDataset) -> Array2<f64> {
    let (n, d, k) = (log.n_rounds(), log.dim_context(), log.n_actions());
    let mut x = Array2::zeros((n * k, d + k));
    for t in 0..n {
        for a in 0..k {
            let mut row = x.row_mut(t * k + a);
            row.slice_mut(ndarray::s![..d]).assign(&log.context(t));
            row[d + a] = 1.0;
        }
    }
    x
}

/// Pseudo importance ratio of the chosen action from ρ over all actions.
fn pseudo_ratio(pi_b: ndarray::ArrayView1<f64>, rho: &[f64], chosen: usize) -> (f64, f64, f64) {
    let a_mass: f64 = pi_b.iter().zip(rho).map(|(p, r)| p * r).sum();
    let b_mass: f64 = pi_b.iter().zip(rho).map(|(p, r)| p * (1.0 - r)).sum();
    let rc = rho[chosen];
    (rc / (1.0 - rc) * b_mass / a_mass, a_mass, b_mass)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub step: f64,
    pub target_split: f64,
    /// Gradients with a larger Euclidean norm are rescaled to this norm.
    pub max_grad_norm: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { hidden: vec![32, 32], epochs: 200, step: 0.05, target_split: 0.5, max_grad_norm: 1.0 }
    }
}

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Importance-fitting objective on one task; kept separate from the network
/// so gradients can be checked numerically.
pub struct FittingProblem<'a> {
    task: &'a OpeTask,
    inputs: Array2<f64>,
    weights: Vec<f64>,
    pub lambda: f64,
    pub target_split: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    /// mean_t (w̃_t − w_t)².
    pub fitting: f64,
    pub regularizer: f64,
}

impl LossParts {
    pub fn total(&self, lambda: f64) -> f64 {
        self.fitting + lambda * self.regularizer
    }
}

impl<'a> FittingProblem<'a> {
    pub fn new(task: &'a OpeTask, lambda: f64, target_split: f64) -> Self {
        let weights = (0..task.n_rounds())
            .map(|t| task.chosen_evaluation(t) / task.logging().chosen_propensity(t))
            .collect();
        Self { task, inputs: all_action_inputs(task.logging()), weights, lambda, target_split }
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn loss(&self, net: &SamplingRuleNet) -> LossParts {
        let rho = net.forward(self.inputs.view());
        self.loss_from_rho(rho.as_slice().expect("contiguous")).0
    }

    /// Loss parts and dL/dρ for every (round, action) input.
    fn loss_from_rho(&self, rho: &[f64]) -> (LossParts, Vec<f64>) {
        let log = self.task.logging();
        let (n, k) = (log.n_rounds(), log.n_actions());
        let nf = n as f64;
        let mut grad = vec![0.0; n * k];
        let mut fit = 0.0;
        let mut mean_rho = 0.0;
        let props = log.propensities();
        for t in 0..n {
            let c = log.actions()[t];
            let pi_b = props.row(t);
            let r = &rho[t * k..(t + 1) * k];
            let (wt, a_mass, b_mass) = pseudo_ratio(pi_b, r, c);
            let diff = wt - self.weights[t];
            fit += diff * diff;
            mean_rho += r[c];
            let scale = 2.0 * diff / nf * wt;
            for a in 0..k {
                let mut dlog = -pi_b[a] / b_mass - pi_b[a] / a_mass;
                if a == c {
                    dlog += 1.0 / r[c] + 1.0 / (1.0 - r[c]);
                }
                grad[t * k + a] = scale * dlog;
            }
        }
        mean_rho /= nf;
        let reg_grad = 2.0 * (mean_rho - self.target_split) / nf * self.lambda;
        for t in 0..n {
            grad[t * k + log.actions()[t]] += reg_grad;
        }
        (LossParts { fitting: fit / nf, regularizer: (mean_rho - self.target_split).powi(2) }, grad)
    }

    /// Total loss and its gradient with respect to the flat network parameters.
    pub fn loss_and_gradient(&self, net: &SamplingRuleNet) -> (f64, Vec<f64>) {
        let (acts, rho) = net.forward_cache(self.inputs.view());
        let (parts, g) = self.loss_from_rho(rho.as_slice().expect("contiguous"));
        (parts.total(self.lambda), net.backward(&acts, &rho, &Array1::from(g)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub net: SamplingRuleNet,
    /// Total loss before each epoch's update, then after the last.
    pub history: Vec<f64>,
    pub final_loss: LossParts,
}

/// Trains ρ by full-batch gradient descent on the importance-fitting loss.
pub fn importance_fit(task: &OpeTask, lambda: f64, config: &FitConfig, seed: u64) -> Result<FitResult, PasifError> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(PasifError::Lambda(lambda));
    }
    let problem = FittingProblem::new(task, lambda, config.target_split);
    let mut net = SamplingRuleNet::new(problem.input_dim(), &config.hidden, seed);
    let mut params = net.params();
    let mut history = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..config.epochs {
        let (loss, grad) = problem.loss_and_gradient(&net);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(PasifError::Diverged { epoch, loss });
        }
        history.push(loss);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if norm > config.max_grad_norm { config.max_grad_norm / norm } else { 1.0 };
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= config.step * scale * g;
        }
        net.set_params(&params);
    }
    let final_loss = problem.loss(&net);
    let total = final_loss.total(lambda);
    if !total.is_finite() {
        return Err(PasifError::Diverged { epoch: config.epochs, loss: total });
    }
    history.push(total);
    Ok(FitResult { net, history, final_loss })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub fit: FitResult,
    /// Final fitting loss per grid point; `None` where training diverged.
    pub losses: Vec<Option<f64>>,
}

/// Trains once per grid value and keeps the one with the smallest final
/// fitting loss; ties go to the smaller λ.
pub fn tune_lambda(task: &OpeTask, grid: &[f64], config: &FitConfig, seed: u64) -> Result<LambdaChoice, PasifError> {
    if grid.is_empty() {
        return Err(PasifError::EmptyGrid);
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let mut losses = vec![None; grid.len()];
    let mut best: Option<(usize, FitResult)> = None;
    for i in order {
        let fit = match importance_fit(task, grid[i], config, seed) {
            Ok(f) => f,
            Err(PasifError::Diverged { .. }) => continue,
            Err(e) => return Err(e),
        };
        losses[i] = Some(fit.final_loss.fitting);
        if best.as_ref().is_none_or(|(_, b)| fit.final_loss.fitting < b.final_loss.fitting) {
            best = Some((i, fit));
        }
    }
    let (i, fit) = best.ok_or(PasifError::AllDiverged)?;
    Ok(LambdaChoice { lambda: grid[i], fit, losses })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSplit {
    /// True where the round went to the pseudo evaluation set.
    pub to_evaluation: Vec<bool>,
    pub pi_b_tilde: Array2<f64>,
    pub pi_e_tilde: Array2<f64>,
    /// π̃_e / π̃_b at the chosen action, per round.
    pub w_tilde: Vec<f64>,
}

impl PseudoSplit {
    /// Splits with per-round assignment probabilities given by `rho_all`
    /// (row-major rounds × actions).
    pub fn from_rho(task: &OpeTask, rho_all: &[f64], seed: u64) -> Result<Self, PasifError> {
        let log = task.logging();
        let (n, k) = (log.n_rounds(), log.n_actions());
        let mut pi_b_tilde = Array2::zeros((n, k));
        let mut pi_e_tilde = Array2::zeros((n, k));
        let mut w_tilde = Vec::with_capacity(n);
        let props = log.propensities();
        for t in 0..n {
            let pi_b = props.row(t);
            let r = &rho_all[t * k..(t + 1) * k];
            let (w, a_mass, b_mass) = pseudo_ratio(pi_b, r, log.actions()[t]);
            for a in 0..k {
                pi_e_tilde[[t, a]] = pi_b[a] * r[a] / a_mass;
                pi_b_tilde[[t, a]] = pi_b[a] * (1.0 - r[a]) / b_mass;
            }
            w_tilde.push(w);
        }
        for attempt in 0..MAX_SPLIT_ATTEMPTS {
            let mut rng = stream(seed, &[TAG_PASIF, 1, attempt as u64]);
            let to_evaluation: Vec<bool> =
                (0..n).map(|t| rng.random_bool(rho_all[t * k + log.actions()[t]])).collect();
            let n_eval = to_evaluation.iter().filter(|&&e| e).count();
            if n_eval > 0 && n_eval < n {
                return Ok(Self { to_evaluation, pi_b_tilde, pi_e_tilde, w_tilde });
            }
        }
        Err(PasifError::DegenerateSplit(MAX_SPLIT_ATTEMPTS))
    }

    pub fn evaluation_rows(&self) -> Vec<usize> {
        (0..self.to_evaluation.len()).filter(|&t| self.to_evaluation[t]).collect()
    }

    pub fn logging_rows(&self) -> Vec<usize> {
        (0..self.to_evaluation.len()).filter(|&t| !self.to_evaluation[t]).collect()
    }

    /// V̂_on: mean reward of the pseudo evaluation set.
    pub fn on_policy_value(&self, task: &OpeTask) -> f64 {
        let rows = self.evaluation_rows();
        rows.iter().map(|&t| task.rewards()[t]).sum::<f64>() / rows.len() as f64
    }

    /// Pseudo logging set with π̃_b as logging and π̃_e as evaluation policy.
    pub fn pseudo_task(&self, task: &OpeTask) -> Result<OpeTask, BanditError> {
        let rows = self.logging_rows();
        let sub = task.logging().select_rows(&rows);
        let pick = |m: &Array2<f64>| m.select(Axis(0), &rows);
        let logging = LoggingDataset::new(
            sub.contexts().to_owned(),
            sub.actions().to_vec(),
            sub.rewards().to_vec(),
            pick(&self.pi_b_tilde),
        )?;
        OpeTask::new(logging, pick(&self.pi_e_tilde))
    }
}

pub fn subsample_pseudo(task: &OpeTask, net: &SamplingRuleNet, seed: u64) -> Result<PseudoSplit, PasifError> {
    let rho = net.forward(all_action_inputs(task.logging()).view());
    PseudoSplit::from_rho(task, rho.as_slice().expect("contiguous"), seed)
}

/// (V̂_on − V̂)² with a caller-supplied estimate on the pseudo logging task.
pub fn pasif_mse_with<F>(task: &OpeTask, split: &PseudoSplit, estimate: F) -> Result<f64, PasifError>
where
    F: FnOnce(&OpeTask) -> Result<f64, PasifError>,
{
    let v_on = split.on_policy_value(task);
    let v = estimate(&split.pseudo_task(task)?)?;
    Ok((v_on - v).powi(2))
}

pub fn pasif_mse(task: &OpeTask, split: &PseudoSplit, spec: &EstimatorSpec, seed: u64) -> Result<f64, PasifError> {
    pasif_mse_with(task, split, |pseudo| Ok(run_estimator(spec, pseudo, seed)?))
}

/// Full baseline: tune λ, split once, score all 21 candidates.
pub fn pasif_select(task: &OpeTask, grid: &[f64], config: &FitConfig, seed: u64) -> Result<(SelectionResult, f64), PasifError> {
    let choice = tune_lambda(task, grid, config, seed)?;
    let split = subsample_pseudo(task, &choice.fit.net, derive_seed(seed, &[TAG_PASIF, 2]))?;
    let pseudo = split.pseudo_task(task)?;
    let v_on = split.on_policy_value(task);
    let candidates = enumerate_candidates();
    let est_seed = derive_seed(seed, &[TAG_PASIF, 3]);
    let mut predicted = Vec::with_capacity(candidates.len());
    for spec in &candidates {
        predicted.push((v_on - run_estimator(spec, &pseudo, est_seed)?).powi(2));
    }
    Ok((SelectionResult::from_predictions(candidates, predicted), choice.lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn output_strictly_inside_unit_interval() {
        let net = SamplingRuleNet::new(3, &[4, 4], 1);
        let x = array![[1e6, -1e6, 0.0], [0.0, 0.0, 0.0]];
        for r in net.forward(x.view()) {
            assert!(r > 0.0 && r < 1.0);
        }
    }

    #[test]
    fn params_round_trip() {
        let mut net = SamplingRuleNet::new(3, &[2], 5);
        let p = net.params();
        assert_eq!(p.len(), 3 * 2 + 2 + 2 + 1);
        net.set_params(&p);
        assert_eq!(net.params(), p);
    }
}
