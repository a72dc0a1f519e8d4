#![allow(dead_code)]

use ndarray::{array, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use opesel_core::bandit::{sample_categorical, LoggingDataset, OpeTask};

/// Two-round, two-action fixture with hand-computed estimator values.
pub fn f1() -> (OpeTask, Array2<f64>) {
    let contexts = array![[0.0], [1.0]];
    let logging = LoggingDataset::new(contexts, vec![0, 1], vec![1.0, 0.0], array![[0.5, 0.5], [0.2, 0.8]]).unwrap();
    let task = OpeTask::new(logging, array![[1.0, 0.0], [0.6, 0.4]]).unwrap();
    (task, array![[0.5, 0.1], [0.3, 0.7]])
}

pub fn random_distribution(rng: &mut ChaCha8Rng, k: usize, temperature: f64) -> Vec<f64> {
    let z: Vec<f64> = (0..k).map(|_| (temperature * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
    let s: f64 = z.iter().sum();
    z.into_iter().map(|v| v / s).collect()
}

/// Task with random full-support policies and Bernoulli rewards.
pub fn random_task(seed: u64, n: usize, k: usize, d: usize) -> OpeTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let contexts = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let mut pb = Array2::zeros((n, k));
    let mut pe = Array2::zeros((n, k));
    for t in 0..n {
        for (a, p) in random_distribution(&mut rng, k, 1.0).into_iter().enumerate() {
            pb[[t, a]] = p;
        }
        for (a, p) in random_distribution(&mut rng, k, 1.5).into_iter().enumerate() {
            pe[[t, a]] = p;
        }
    }
    let actions: Vec<usize> = (0..n).map(|t| sample_categorical(&mut rng, pb.row(t))).collect();
    let rewards: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 }).collect();
    OpeTask::new(LoggingDataset::new(contexts, actions, rewards, pb).unwrap(), pe).unwrap()
}

pub fn random_q(seed: u64, n: usize, k: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    Array2::from_shape_fn((n, k), |_| rng.random::<f64>())
}

/// Same task with the evaluation policy replaced by the logging policy.
pub fn on_policy(task: &OpeTask) -> OpeTask {
    task.with_evaluation(task.logging().propensities().to_owned()).unwrap()
}

/// Same task with the observed rewards replaced.
pub fn with_rewards(task: &OpeTask, rewards: Vec<f64>) -> OpeTask {
    let log = task.logging();
    let logging = LoggingDataset::new(
        log.contexts().to_owned(),
        log.actions().to_vec(),
        rewards,
        log.propensities().to_owned(),
    )
    .unwrap();
    OpeTask::new(logging, task.evaluation().to_owned()).unwrap()
}

/// Single-context task with the given policies; round `t` takes action `t % k`.
pub fn policy_task(pb: &[Vec<f64>], pe: &[Vec<f64>]) -> OpeTask {
    let n = pb.len();
    let k = pb[0].len();
    let flat = |rows: &[Vec<f64>]| Array2::from_shape_vec((n, k), rows.concat()).unwrap();
    let logging = LoggingDataset::new(
        Array2::zeros((n, 1)),
        (0..n).map(|t| t % k).collect(),
        (0..n).map(|t| (t % 2) as f64).collect(),
        flat(pb),
    )
    .unwrap();
    OpeTask::new(logging, flat(pe)).unwrap()
}
