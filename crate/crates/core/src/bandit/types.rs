use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

/// Tolerance on propensity row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("row {row} of {what} sums to {sum}, expected 1")]
    NotStochastic { what: &'static str, row: usize, sum: f64 },
    #[error("{what} has a negative or non-finite entry in row {row}")]
    InvalidProbability { what: &'static str, row: usize },
    #[error("action {action} in round {round} is out of range for {n_actions} actions")]
    ActionOutOfRange { round: usize, action: usize, n_actions: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

fn check_stochastic(what: &'static str, m: ArrayView2<f64>) -> Result<(), BanditError> {
    for (row, r) in m.axis_iter(Axis(0)).enumerate() {
        if r.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(BanditError::InvalidProbability { what, row });
        }
        let sum: f64 = r.sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(BanditError::NotStochastic { what, row, sum });
        }
    }
    Ok(())
}

/// Logged bandit feedback: contexts, chosen actions, observed rewards and the
/// full logging distribution for every round.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggingDataset {
    contexts: Array2<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    propensities: Array2<f64>,
}

impl LoggingDataset {
    pub fn new(
        contexts: Array2<f64>,
        actions: Vec<usize>,
        rewards: Vec<f64>,
        propensities: Array2<f64>,
    ) -> Result<Self, BanditError> {
        let n = contexts.nrows();
        if actions.len() != n || rewards.len() != n || propensities.nrows() != n {
            return Err(BanditError::Dimension(format!(
                "contexts have {n} rows, actions {}, rewards {}, propensities {}",
                actions.len(),
                rewards.len(),
                propensities.nrows()
            )));
        }
        let n_actions = propensities.ncols();
        if n_actions == 0 {
            return Err(BanditError::Dimension("no actions".into()));
        }
        for (round, &action) in actions.iter().enumerate() {
            if action >= n_actions {
                return Err(BanditError::ActionOutOfRange { round, action, n_actions });
            }
        }
        if contexts.iter().any(|v| !v.is_finite()) {
            return Err(BanditError::NonFinite("contexts"));
        }
        if rewards.iter().any(|v| !v.is_finite()) {
            return Err(BanditError::NonFinite("rewards"));
        }
        check_stochastic("logging propensities", propensities.view())?;
        Ok(Self { contexts, actions, rewards, propensities })
    }

    pub fn n_rounds(&self) -> usize {
        self.actions.len()
    }

    pub fn n_actions(&self) -> usize {
        self.propensities.ncols()
    }

    pub fn dim_context(&self) -> usize {
        self.contexts.ncols()
    }

    pub fn contexts(&self) -> ArrayView2<'_, f64> {
        self.contexts.view()
    }

    pub fn context(&self, t: usize) -> ArrayView1<'_, f64> {
        self.contexts.row(t)
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn propensities(&self) -> ArrayView2<'_, f64> {
        self.propensities.view()
    }

    /// π_b(a_t | x_t) for the logged action.
    pub fn chosen_propensity(&self, t: usize) -> f64 {
        self.propensities[[t, self.actions[t]]]
    }

    /// True when every logging propensity is strictly positive.
    pub fn has_full_support(&self) -> bool {
        self.propensities.iter().all(|&p| p > 0.0)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            contexts: self.contexts.select(Axis(0), rows),
            actions: rows.iter().map(|&t| self.actions[t]).collect(),
            rewards: rows.iter().map(|&t| self.rewards[t]).collect(),
            propensities: self.propensities.select(Axis(0), rows),
        }
    }
}

/// A logging dataset together with the evaluation policy's action
/// probabilities on every logged context.
#[derive(Debug, Clone, PartialEq)]
pub struct OpeTask {
    logging: LoggingDataset,
    evaluation: Array2<f64>,
}

impl OpeTask {
    pub fn new(logging: LoggingDataset, evaluation: Array2<f64>) -> Result<Self, BanditError> {
        if evaluation.dim() != logging.propensities.dim() {
            return Err(BanditError::Dimension(format!(
                "evaluation propensities {:?} vs logging propensities {:?}",
                evaluation.dim(),
                logging.propensities.dim()
            )));
        }
        check_stochastic("evaluation propensities", evaluation.view())?;
        Ok(Self { logging, evaluation })
    }

    pub fn logging(&self) -> &LoggingDataset {
        &self.logging
    }

    pub fn evaluation(&self) -> ArrayView2<'_, f64> {
        self.evaluation.view()
    }

    pub fn n_rounds(&self) -> usize {
        self.logging.n_rounds()
    }

    pub fn n_actions(&self) -> usize {
        self.logging.n_actions()
    }

    pub fn dim_context(&self) -> usize {
        self.logging.dim_context()
    }

    pub fn actions(&self) -> &[usize] {
        self.logging.actions()
    }

    pub fn rewards(&self) -> &[f64] {
        self.logging.rewards()
    }

    /// π_e(a_t | x_t) for the logged action.
    pub fn chosen_evaluation(&self, t: usize) -> f64 {
        self.evaluation[[t, self.logging.actions[t]]]
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            logging: self.logging.select_rows(rows),
            evaluation: self.evaluation.select(Axis(0), rows),
        }
    }

    /// Same rounds, different logging and evaluation policies.
    pub fn with_policies(
        &self,
        logging_propensities: Array2<f64>,
        evaluation: Array2<f64>,
    ) -> Result<Self, BanditError> {
        let logging = LoggingDataset::new(
            self.logging.contexts.clone(),
            self.logging.actions.clone(),
            self.logging.rewards.clone(),
            logging_propensities,
        )?;
        Self::new(logging, evaluation)
    }

    /// Replaces only the evaluation policy.
    pub fn with_evaluation(&self, evaluation: Array2<f64>) -> Result<Self, BanditError> {
        Self::new(self.logging.clone(), evaluation)
    }
}

/// A large dataset collected under the evaluation policy, with the exact
/// expected rewards of every action on every context.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthDataset {
    contexts: Array2<f64>,
    expected_rewards: Array2<f64>,
    evaluation: Array2<f64>,
    sampled_actions: Vec<usize>,
    sampled_rewards: Vec<f64>,
}

impl GroundTruthDataset {
    pub fn new(
        contexts: Array2<f64>,
        expected_rewards: Array2<f64>,
        evaluation: Array2<f64>,
        sampled_actions: Vec<usize>,
        sampled_rewards: Vec<f64>,
    ) -> Result<Self, BanditError> {
        let n = contexts.nrows();
        if expected_rewards.nrows() != n
            || evaluation.dim() != expected_rewards.dim()
            || sampled_actions.len() != n
            || sampled_rewards.len() != n
        {
            return Err(BanditError::Dimension("ground-truth arrays disagree".into()));
        }
        if expected_rewards.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(BanditError::InvalidProbability { what: "expected rewards", row: 0 });
        }
        check_stochastic("evaluation propensities", evaluation.view())?;
        Ok(Self { contexts, expected_rewards, evaluation, sampled_actions, sampled_rewards })
    }

    pub fn n_rounds(&self) -> usize {
        self.contexts.nrows()
    }

    pub fn contexts(&self) -> ArrayView2<'_, f64> {
        self.contexts.view()
    }

    pub fn expected_rewards(&self) -> ArrayView2<'_, f64> {
        self.expected_rewards.view()
    }

    pub fn evaluation(&self) -> ArrayView2<'_, f64> {
        self.evaluation.view()
    }

    pub fn sampled_actions(&self) -> &[usize] {
        &self.sampled_actions
    }

    pub fn sampled_rewards(&self) -> &[f64] {
        &self.sampled_rewards
    }
}

/// V(π_e) = (1/n_gt) Σ_t Σ_a π_e(a|x_t) q(x_t, a).
pub fn true_policy_value(gt: &GroundTruthDataset) -> f64 {
    let n = gt.n_rounds();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = gt
        .evaluation
        .axis_iter(Axis(0))
        .zip(gt.expected_rewards.axis_iter(Axis(0)))
        .map(|(pi, q)| pi.dot(&q))
        .sum();
    total / n as f64
}

/// A task whose logged rewards are all 0 or all 1 carries no signal.
pub fn is_trivial_task(task: &OpeTask) -> bool {
    let rewards = task.rewards();
    match rewards.first() {
        None => true,
        Some(&first) => (first == 0.0 || first == 1.0) && rewards.iter().all(|&r| r == first),
    }
}
