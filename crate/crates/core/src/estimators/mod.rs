//! Off-policy value estimators and the 21-candidate set.

mod formulas;
mod slope;
mod sweep;

pub use formulas::*;
pub use slope::*;
pub use sweep::*;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward_models::{RewardModelError, RewardModelKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("logging propensity of the chosen action is zero in round {round}")]
    NoSupport { round: usize },
    #[error("importance weights sum to zero")]
    ZeroWeightSum,
    #[error("reward matrix has shape {got:?}, expected {expected:?}")]
    Shape { expected: (usize, usize), got: (usize, usize) },
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("{0} needs a reward model")]
    MissingRewardModel(String),
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("empty task")]
    Empty,
    #[error(transparent)]
    RewardModel(#[from] RewardModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorFamily {
    DM,
    IPS,
    SNIPS,
    IPSLambda,
    DR,
    SNDR,
    DRLambda,
    DRos,
    SwitchDR,
}

impl EstimatorFamily {
    pub fn needs_reward_model(self) -> bool {
        !matches!(self, EstimatorFamily::IPS | EstimatorFamily::SNIPS | EstimatorFamily::IPSLambda)
    }

    pub fn is_tunable(self) -> bool {
        matches!(
            self,
            EstimatorFamily::IPSLambda | EstimatorFamily::DRLambda | EstimatorFamily::DRos | EstimatorFamily::SwitchDR
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorFamily::DM => "dm",
            EstimatorFamily::IPS => "ips",
            EstimatorFamily::SNIPS => "snips",
            EstimatorFamily::IPSLambda => "ips-lambda",
            EstimatorFamily::DR => "dr",
            EstimatorFamily::SNDR => "sndr",
            EstimatorFamily::DRLambda => "dr-lambda",
            EstimatorFamily::DRos => "dros",
            EstimatorFamily::SwitchDR => "switch",
        }
    }
}

/// Names of the nine estimator flags, in feature order.
pub const FLAG_NAMES: [&str; 9] = [
    "is_self_normalized",
    "uses_importance_sampling",
    "uses_reward_model",
    "is_subgaussian",
    "is_shrinkage",
    "is_switch",
    "uses_forest_rm",
    "uses_boosted_rm",
    "uses_logistic_rm",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimatorSpec {
    family: EstimatorFamily,
    reward_model: Option<RewardModelKind>,
}

impl EstimatorSpec {
    /// Fails when a reward model is given to a model-free family or missing
    /// from a model-based one.
    pub fn new(family: EstimatorFamily, reward_model: Option<RewardModelKind>) -> Result<Self, EstimatorError> {
        if family.needs_reward_model() != reward_model.is_some() {
            return Err(EstimatorError::MissingRewardModel(format!(
                "{} with reward model {reward_model:?}",
                family.name()
            )));
        }
        Ok(Self { family, reward_model })
    }

    pub fn family(&self) -> EstimatorFamily {
        self.family
    }

    pub fn reward_model(&self) -> Option<RewardModelKind> {
        self.reward_model
    }

    /// Stable identifier such as `dr-rf` or `ips`.
    pub fn id(&self) -> String {
        match self.reward_model {
            None => self.family.name().to_string(),
            Some(rm) => format!("{}-{}", self.family.name(), rm.short_name()),
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        enumerate_candidates().into_iter().find(|s| s.id() == id)
    }

    pub fn flags(&self) -> [bool; 9] {
        use EstimatorFamily::*;
        let f = self.family;
        [
            matches!(f, SNIPS | SNDR),
            f != DM,
            self.reward_model.is_some(),
            matches!(f, IPSLambda | DRLambda),
            f == DRos,
            f == SwitchDR,
            self.reward_model == Some(RewardModelKind::ForestClassifier),
            self.reward_model == Some(RewardModelKind::GradientBoostedClassifier),
            self.reward_model == Some(RewardModelKind::LogisticRegression),
        ]
    }
}

/// The 21 candidates: IPS, SNIPS, IPS-λ, then DM, DR, SNDR, DR-λ, DRos and
/// Switch, each with the forest, logistic and boosted reward models.
pub fn enumerate_candidates() -> Vec<EstimatorSpec> {
    use EstimatorFamily::*;
    let mut out: Vec<EstimatorSpec> = [IPS, SNIPS, IPSLambda]
        .into_iter()
        .map(|family| EstimatorSpec { family, reward_model: None })
        .collect();
    for family in [DM, DR, SNDR, DRLambda, DRos, SwitchDR] {
        for rm in RewardModelKind::ALL {
            out.push(EstimatorSpec { family, reward_model: Some(rm) });
        }
    }
    out
}
