mod common;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::{random_task, with_rewards};
use opesel_core::bandit::{LoggingDataset, OpeTask};
use opesel_core::reward_models::*;

/// Rewards drawn from σ(θᵀx) with a large θ and uniform logging.
fn separable_task(n: usize, seed: u64) -> OpeTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = [4.0, -3.0, 5.0];
    let contexts = Array2::from_shape_fn((n, 3), |_| rng.sample::<f64, _>(StandardNormal));
    let actions: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let rewards: Vec<f64> = (0..n)
        .map(|t| {
            let z: f64 = contexts.row(t).iter().zip(&theta).map(|(x, w)| x * w).sum();
            let p = 1.0 / (1.0 + (-z).exp());
            if rng.random_bool(p) { 1.0 } else { 0.0 }
        })
        .collect();
    let pb = Array2::from_elem((n, 2), 0.5);
    OpeTask::new(LoggingDataset::new(contexts, actions, rewards, pb.clone()).unwrap(), pb).unwrap()
}

/// Probability that a random positive outranks a random negative.
fn auc(scores: &[f64], labels: &[f64]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, y)| **y == 1.0).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, y)| **y == 0.0).map(|(s, _)| *s).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[test]
fn constant_rewards_give_constant_predictions() {
    let task = with_rewards(&random_task(1, 30, 3, 2), vec![1.0; 30]);
    for kind in RewardModelKind::ALL {
        let fit = fit_cross_fitted(&task, kind, 5).unwrap();
        assert!(fit.q_hat.iter().all(|&q| q == 1.0), "{kind:?}");
    }
}

#[test]
fn logistic_recovers_separable_signal() {
    let task = separable_task(2000, 7);
    let fit = fit_cross_fitted(&task, RewardModelKind::LogisticRegression, 3).unwrap();
    let chosen: Vec<f64> = task.actions().iter().enumerate().map(|(t, &a)| fit.q_hat[[t, a]]).collect();
    let score = auc(&chosen, task.rewards());
    assert!(score > 0.9, "auc {score}");
}

#[test]
fn folds_are_balanced() {
    for n in [3, 10, 31, 100] {
        let folds = fold_assignment(n, 9);
        for k in 0..3 {
            let size = folds.iter().filter(|&&f| f == k).count() as f64;
            assert!((size - n as f64 / 3.0).abs() <= 1.0, "n={n} fold {k} size {size}");
        }
    }
}

#[test]
fn too_few_rounds() {
    let task = random_task(2, 2, 2, 1);
    assert_eq!(fit_cross_fitted(&task, RewardModelKind::LogisticRegression, 0), Err(RewardModelError::TooFewRounds(2)));
}

#[test]
fn held_out_row_ignores_its_own_reward() {
    let task = random_task(3, 45, 3, 2);
    for kind in RewardModelKind::ALL {
        let base = fit_cross_fitted(&task, kind, 11).unwrap();
        for t in [0, 17, 44] {
            let mut r = task.rewards().to_vec();
            r[t] = 1.0 - r[t];
            let flipped = fit_cross_fitted(&with_rewards(&task, r), kind, 11).unwrap();
            assert_eq!(base.q_hat.row(t), flipped.q_hat.row(t), "{kind:?} round {t}");
        }
    }
}

#[test]
fn deterministic_and_in_range() {
    let task = random_task(4, 60, 4, 3);
    for kind in RewardModelKind::ALL {
        let a = fit_cross_fitted(&task, kind, 2).unwrap();
        let b = fit_cross_fitted(&task, kind, 2).unwrap();
        assert_eq!(a.q_hat, b.q_hat);
        assert!(a.q_hat.iter().all(|q| (0.0..=1.0).contains(q)));
        assert!(a.fold_assignment.iter().all(|f| *f < 3));
    }
}

#[test]
fn point_predictions() {
    let x = Array1::from(vec![0.3, -2.0]);
    let c = RewardModel::Constant(0.3);
    assert_eq!(c.predict_q(x.view(), 1, 3).unwrap(), 0.3);
    let zero = RewardModel::Logistic(LogisticModel { context_weights: vec![0.0; 2], action_weights: vec![0.0; 3], bias: 0.0 });
    assert_eq!(zero.predict_q(x.view(), 2, 3).unwrap(), 0.5);
    assert_eq!(RewardModel::Unfitted.predict_q(x.view(), 0, 3), Err(RewardModelError::Unfitted));
}

#[test]
fn forest_reproduces_pure_leaf_frequency() {
    // Action 0 always pays and action 1 never does: one split separates them
    // into pure leaves.
    let n = 40;
    let contexts = Array2::zeros((n, 1));
    let actions: Vec<usize> = (0..n).map(|t| t % 2).collect();
    let rewards: Vec<f64> = actions.iter().map(|&a| if a == 0 { 1.0 } else { 0.0 }).collect();
    let m = RewardModel::fit(RewardModelKind::ForestClassifier, contexts.view(), &actions, &rewards, 2, 0).unwrap();
    let row = m.predict_q_row(contexts.row(0), 2).unwrap();
    assert_eq!(row, vec![1.0, 0.0]);
}
