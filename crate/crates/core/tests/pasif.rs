mod common;

use ndarray::Array2;

use common::{on_policy, random_task};
use opesel_core::pasif::*;

/// [context ‖ one-hot(action)] for every round and action, row-major.
fn inputs(task: &opesel_core::bandit::OpeTask) -> Array2<f64> {
    let (n, d, k) = (task.n_rounds(), task.dim_context(), task.n_actions());
    Array2::from_shape_fn((n * k, d + k), |(i, j)| {
        let (t, a) = (i / k, i % k);
        if j < d {
            task.logging().context(t)[j]
        } else if j - d == a {
            1.0
        } else {
            0.0
        }
    })
}

fn mean_chosen_rho(task: &opesel_core::bandit::OpeTask, net: &SamplingRuleNet) -> f64 {
    let rho = net.forward(inputs(task).view());
    let k = task.n_actions();
    task.actions().iter().enumerate().map(|(t, &a)| rho[t * k + a]).sum::<f64>() / task.n_rounds() as f64
}

#[test]
fn on_policy_data_fits_to_zero() {
    let task = on_policy(&random_task(1, 200, 3, 2));
    let fit = importance_fit(&task, 0.1, &FitConfig::default(), 4).unwrap();
    assert!(fit.final_loss.fitting <= 1e-3, "{:?}", fit.final_loss);
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..5 {
        let task = random_task(10 + seed, 12, 3, 2);
        let problem = FittingProblem::new(&task, 0.7, 0.5);
        let mut net = SamplingRuleNet::new(problem.input_dim(), &[4, 3], seed);
        let (_, grad) = problem.loss_and_gradient(&net);
        let base = net.params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] = base[i] + h;
            net.set_params(&p);
            let up = problem.loss(&net).total(0.7);
            p[i] = base[i] - h;
            net.set_params(&p);
            let down = problem.loss(&net).total(0.7);
            let numeric = (up - down) / (2.0 * h);
            let scale = grad[i].abs().max(numeric.abs()).max(1e-3);
            assert!((numeric - grad[i]).abs() / scale <= 1e-4, "seed {seed} param {i}: {numeric} vs {}", grad[i]);
        }
        net.set_params(&base);
    }
}

#[test]
fn heavy_regularization_hits_target_split() {
    let task = random_task(2, 150, 3, 2);
    let config = FitConfig { target_split: 0.3, ..FitConfig::default() };
    let fit = importance_fit(&task, 1e4, &config, 1).unwrap();
    let m = mean_chosen_rho(&task, &fit.net);
    assert!((m - 0.3).abs() <= 0.05, "mean rho {m}");
}

#[test]
fn training_is_deterministic() {
    let task = random_task(3, 60, 3, 2);
    let config = FitConfig { epochs: 30, ..FitConfig::default() };
    let a = importance_fit(&task, 0.1, &config, 9).unwrap();
    let b = importance_fit(&task, 0.1, &config, 9).unwrap();
    assert_eq!(a.net.params(), b.net.params());
    assert_eq!(a.history, b.history);
}

#[test]
fn fair_coin_split() {
    let task = random_task(4, 400, 3, 2);
    let split = PseudoSplit::from_rho(&task, &vec![0.5; 400 * 3], 2).unwrap();
    let n_e = split.evaluation_rows().len() as f64;
    assert!((n_e - 200.0).abs() <= 3.0 * (400.0f64 / 4.0).sqrt(), "{n_e}");
    assert_eq!(split.evaluation_rows().len() + split.logging_rows().len(), 400);
}

#[test]
fn pseudo_ratios_are_consistent() {
    let task = random_task(5, 50, 4, 2);
    let rho: Vec<f64> = (0..200).map(|i| 0.1 + 0.8 * ((i * 37 % 11) as f64 / 10.0)).collect();
    let split = PseudoSplit::from_rho(&task, &rho, 0).unwrap();
    for (t, &a) in task.actions().iter().enumerate() {
        let w = split.pi_e_tilde[[t, a]] / split.pi_b_tilde[[t, a]];
        assert!((w - split.w_tilde[t]).abs() <= 1e-12);
        assert!((split.pi_e_tilde.row(t).sum() - 1.0).abs() <= 1e-12);
        assert!((split.pi_b_tilde.row(t).sum() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn one_round_cannot_be_split() {
    let task = random_task(6, 1, 2, 1);
    assert!(matches!(PseudoSplit::from_rho(&task, &[0.99, 0.99], 0), Err(PasifError::DegenerateSplit(10))));
}

#[test]
fn mse_with_stubs() {
    let task = random_task(7, 80, 3, 2);
    let split = PseudoSplit::from_rho(&task, &vec![0.5; 240], 1).unwrap();
    let v_on = split.on_policy_value(&task);
    assert_eq!(pasif_mse_with(&task, &split, |_| Ok(v_on)).unwrap(), 0.0);
    let off = pasif_mse_with(&task, &split, |_| Ok(v_on + 0.2)).unwrap();
    assert!((off - 0.04).abs() <= 1e-12);
}

#[test]
fn lambda_grid_choice() {
    let task = random_task(8, 60, 3, 2);
    let config = FitConfig { epochs: 40, ..FitConfig::default() };
    let single = tune_lambda(&task, &[0.3], &config, 0).unwrap();
    assert_eq!(single.lambda, 0.3);
    let grid = [1.0, 1e-2, 0.1];
    let choice = tune_lambda(&task, &grid, &config, 0).unwrap();
    let min = choice.losses.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let i = grid.iter().position(|&g| g == choice.lambda).unwrap();
    assert_eq!(choice.losses[i], Some(min));
    assert!(matches!(tune_lambda(&task, &[], &config, 0), Err(PasifError::EmptyGrid)));
    assert!(matches!(importance_fit(&task, -1.0, &config, 0), Err(PasifError::Lambda(_))));
}

#[test]
fn network_output_is_a_probability() {
    let net = SamplingRuleNet::new(4, &[32, 32], 3);
    let x = Array2::from_shape_fn((20, 4), |(i, j)| (i as f64 - 10.0) * (j as f64 + 1.0));
    assert!(net.forward(x.view()).iter().all(|&r| r > 0.0 && r < 1.0));
}
