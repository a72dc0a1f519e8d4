//! Named experiments.
//!
//! * `logging1`, `logging2`: fixed synthetic environments (10 actions,
//!   10-dimensional contexts, logistic rewards, reward-proportional policies)
//!   logged by two policies with inverse temperatures (2, −2) and (3, 7);
//!   21 evaluation policies with β_e = −10, −9, …, 10.
//! * `classification`: converts a labelled CSV for each α_e and scores
//!   selection on stratified bootstrap samples of the logging data.
//! * `scaling`: held-out regret against meta-dataset size, with a fitted
//!   L = A + B / D^α curve.
//! * `ablation-features`: models restricted to feature groups.
//! * `ablation-diversity`: models trained only on tasks with few actions or
//!   with similar policies.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use opesel_core::bandit::{
    true_policy_value, LoggingBeta, OpeTask, PolicyFnKind, RewardFnKind, TaskGenParams, TaskGenerator,
};
use opesel_core::estimators::enumerate_candidates;
use opesel_core::features::{FeatureGroup, FEATURE_NAMES};
use opesel_core::meta_model::{
    load, read_file, split_by_task, train_with_search, FeatureMask, MseRecord, TrainedMetaModel,
};
use opesel_core::pasif::{pasif_select, FitConfig, DEFAULT_LAMBDA_GRID};
use opesel_core::rng::{derive_seed, stream, TAG_BOOTSTRAP, TAG_SPLIT, TAG_TASK};
use opesel_core::selection::{
    autoope_select, realization_seed, stratified_bootstrap, sweep_realization, GroundTruthSweep,
};

use crate::convert::{convert_classification_to_bandit, read_classification_csv};
use crate::report::{aggregate, evaluate_records, fmt17, write_aggregate, write_task_reports, TaskReport};

pub const PRESETS: [&str; 6] =
    ["logging1", "logging2", "classification", "scaling", "ablation-features", "ablation-diversity"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: String,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub model: Option<PathBuf>,
    pub meta: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub label_column: Option<String>,
    /// Logging realizations per β_e.
    pub n_data: usize,
    pub n_rounds: usize,
    pub n_gt: usize,
    /// Meta-dataset sizes (tasks) for the scaling preset.
    pub sizes: Vec<usize>,
    pub budget: usize,
    pub test_fraction: f64,
    pub alpha_b: f64,
    pub alpha_e: Vec<f64>,
    pub bootstrap_count: usize,
    pub bootstrap_fraction: f64,
    pub split_fraction: f64,
    pub with_pasif: bool,
}

impl ExperimentConfig {
    pub fn new(preset: &str, out: PathBuf) -> Self {
        Self {
            preset: preset.to_string(),
            seed: 0,
            workers: 1,
            out,
            model: None,
            meta: None,
            data: None,
            label_column: None,
            n_data: 100,
            n_rounds: 2000,
            n_gt: 100_000,
            sizes: vec![125, 250, 500, 1000, 2000],
            budget: 50,
            test_fraction: 0.2,
            alpha_b: 0.2,
            alpha_e: vec![0.0, 0.25, 0.5, 0.75, 0.99],
            bootstrap_count: 50,
            bootstrap_fraction: 0.9,
            split_fraction: 0.5,
            with_pasif: false,
        }
    }

    fn validate(&self) -> Result<()> {
        for &a in std::iter::once(&self.alpha_b).chain(&self.alpha_e) {
            if !(0.0..=1.0).contains(&a) {
                bail!("alpha values must lie in [0, 1], got {a}");
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            bail!("test fraction must lie in (0, 1)");
        }
        Ok(())
    }

    fn load_model(&self) -> Result<TrainedMetaModel> {
        let path = self.model.as_ref().ok_or_else(|| anyhow!("preset {} needs a trained model (--model)", self.preset))?;
        load(path).with_context(|| format!("loading model {}", path.display()))
    }

    fn load_meta(&self) -> Result<Vec<MseRecord>> {
        let path = self.meta.as_ref().ok_or_else(|| anyhow!("preset {} needs a meta-dataset (--meta)", self.preset))?;
        Ok(read_file(path).with_context(|| format!("loading meta-dataset {}", path.display()))?.records)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new().num_threads(self.workers.max(1)).build()?)
    }
}

/// Files written by a preset plus a JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetOutput {
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

pub fn run_experiment_preset(config: &ExperimentConfig) -> Result<PresetOutput> {
    config.validate()?;
    let dir = config.out.join(&config.preset);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let out = match config.preset.as_str() {
        "logging1" => logging_preset(config, &dir, LoggingBeta::Pair(2.0, -2.0)),
        "logging2" => logging_preset(config, &dir, LoggingBeta::Pair(3.0, 7.0)),
        "classification" => classification_preset(config, &dir),
        "scaling" => scaling_preset(config, &dir),
        "ablation-features" => ablation_features_preset(config, &dir),
        "ablation-diversity" => ablation_diversity_preset(config, &dir),
        other => bail!("unknown preset {other:?}; expected one of {}", PRESETS.join(", ")),
    }?;
    let summary_path = dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&out.summary)? + "\n")?;
    let mut out = out;
    out.files.push(summary_path);
    Ok(out)
}

/// β_e values of the synthetic presets.
pub fn beta_e_grid() -> Vec<f64> {
    (-10..=10).map(f64::from).collect()
}

pub fn logging_params(beta_b: LoggingBeta, beta_e: f64, config: &ExperimentConfig, seed: u64) -> TaskGenParams {
    TaskGenParams {
        n_actions: 10,
        n_rounds: config.n_rounds,
        dim_context: 10,
        reward_fn: RewardFnKind::Logistic,
        beta_b,
        beta_e,
        policy_fn_b: PolicyFnKind::RewardProportional,
        policy_fn_e: PolicyFnKind::RewardProportional,
        n_gen: config.n_data,
        n_gt: config.n_gt,
        seed,
    }
}

/// Selections on every realization of a synthetic task, scored against the
/// MSEs computed over those same realizations.
fn synthetic_reports(
    params: &TaskGenParams,
    label: &str,
    model: &TrainedMetaModel,
    with_pasif: bool,
) -> Result<Vec<TaskReport>> {
    let generator = TaskGenerator::new(params.clone())?;
    let v_true = true_policy_value(&generator.ground_truth()?);
    let per_realization: Vec<(OpeTask, Vec<f64>)> = (0..params.n_gen as u64)
        .into_par_iter()
        .map(|s| {
            let task = generator.logging_task(s)?;
            let est = sweep_realization(&task, realization_seed(params.seed, s))?;
            Ok((task, est))
        })
        .collect::<Result<_>>()?;
    let truth = GroundTruthSweep { v_true, estimates: per_realization.iter().map(|(_, e)| e.clone()).collect() }.mse();
    let mut reports = Vec::new();
    for (s, (task, _)) in per_realization.iter().enumerate() {
        let name = format!("{label}/{s}");
        let sel = autoope_select(model, task)?.with_ground_truth(truth.clone())?;
        reports.push(TaskReport { task: name.clone(), method: "autoope".into(), result: sel });
        if with_pasif {
            let seed = derive_seed(params.seed, &[TAG_TASK, s as u64, 1]);
            let (sel, _) = pasif_select(task, &DEFAULT_LAMBDA_GRID, &FitConfig::default(), seed)?;
            reports.push(TaskReport { task: name, method: "pas-if".into(), result: sel.with_ground_truth(truth.clone())? });
        }
    }
    Ok(reports)
}

fn group_prefix(r: &TaskReport) -> String {
    r.task.rsplit_once('/').map_or(r.task.clone(), |(g, _)| g.to_string())
}

fn write_reports(dir: &Path, reports: &[TaskReport], seed: u64) -> Result<(Vec<PathBuf>, Vec<crate::report::AggregateRow>)> {
    let per_task = dir.join("per_task.csv");
    let agg_path = dir.join("aggregate.csv");
    write_task_reports(&per_task, reports)?;
    let agg = aggregate(reports, group_prefix, seed);
    write_aggregate(&agg_path, &agg)?;
    Ok((vec![per_task, agg_path], agg))
}

fn logging_preset(config: &ExperimentConfig, dir: &Path, beta_b: LoggingBeta) -> Result<PresetOutput> {
    let model = config.load_model()?;
    let pool = config.pool()?;
    let mut reports = Vec::new();
    for (i, beta_e) in beta_e_grid().into_iter().enumerate() {
        let params = logging_params(beta_b, beta_e, config, derive_seed(config.seed, &[TAG_TASK, i as u64]));
        let label = format!("beta_e={beta_e}");
        reports.extend(pool.install(|| synthetic_reports(&params, &label, &model, config.with_pasif))?);
    }
    let (files, agg) = write_reports(dir, &reports, config.seed)?;
    Ok(PresetOutput {
        files,
        summary: serde_json::json!({
            "preset": config.preset,
            "beta_b": beta_b,
            "n_points": beta_e_grid().len(),
            "n_data": config.n_data,
            "n_reports": reports.len(),
            "aggregate": agg,
        }),
    })
}

fn classification_preset(config: &ExperimentConfig, dir: &Path) -> Result<PresetOutput> {
    let model = config.load_model()?;
    let path = config.data.as_ref().ok_or_else(|| anyhow!("preset classification needs a labelled CSV (--data)"))?;
    let data = read_classification_csv(path, config.label_column.as_deref())?;
    let pool = config.pool()?;
    let mut reports = Vec::new();
    for (i, &alpha_e) in config.alpha_e.iter().enumerate() {
        let seed = derive_seed(config.seed, &[TAG_TASK, i as u64]);
        let converted = convert_classification_to_bandit(&data, config.alpha_b, alpha_e, config.split_fraction, seed)?;
        let v_true = converted.full.true_value()?;
        let task = &converted.full.task;
        let samples: Vec<(OpeTask, Vec<f64>)> = pool.install(|| {
            (0..config.bootstrap_count as u64)
                .into_par_iter()
                .map(|b| {
                    let boot = stratified_bootstrap(task, config.bootstrap_fraction, derive_seed(seed, &[TAG_BOOTSTRAP, b]))?;
                    let est = sweep_realization(&boot, realization_seed(seed, b))?;
                    Ok((boot, est))
                })
                .collect::<Result<_>>()
        })?;
        let truth = GroundTruthSweep { v_true, estimates: samples.iter().map(|(_, e)| e.clone()).collect() }.mse();
        for (b, (boot, _)) in samples.iter().enumerate() {
            let sel = autoope_select(&model, boot)?.with_ground_truth(truth.clone())?;
            reports.push(TaskReport { task: format!("alpha_e={alpha_e}/{b}"), method: "autoope".into(), result: sel });
            if config.with_pasif {
                let (sel, _) = pasif_select(boot, &DEFAULT_LAMBDA_GRID, &FitConfig::default(), realization_seed(seed, b as u64))?;
                reports.push(TaskReport {
                    task: format!("alpha_e={alpha_e}/{b}"),
                    method: "pas-if".into(),
                    result: sel.with_ground_truth(truth.clone())?,
                });
            }
        }
    }
    let (files, agg) = write_reports(dir, &reports, config.seed)?;
    Ok(PresetOutput {
        files,
        summary: serde_json::json!({
            "preset": config.preset,
            "data": path.display().to_string(),
            "n_classes": data.n_classes(),
            "n_samples": data.n_samples(),
            "alpha_b": config.alpha_b,
            "alpha_e": config.alpha_e,
            "aggregate": agg,
        }),
    })
}

/// Test tasks and the shuffled pool of remaining task ids.
pub struct HeldOut {
    pub test: Vec<MseRecord>,
    pub pool_ids: Vec<u64>,
    pub by_task: BTreeMap<u64, Vec<MseRecord>>,
}

pub fn hold_out(records: &[MseRecord], test_fraction: f64, seed: u64) -> HeldOut {
    let (pool, _, test) = split_by_task(records, (1.0 - test_fraction, 0.0), seed);
    let mut by_task: BTreeMap<u64, Vec<MseRecord>> = BTreeMap::new();
    for r in pool {
        by_task.entry(r.task_id).or_default().push(r);
    }
    let mut pool_ids: Vec<u64> = by_task.keys().copied().collect();
    pool_ids.shuffle(&mut stream(seed, &[TAG_SPLIT, 1]));
    HeldOut { test, pool_ids, by_task }
}

impl HeldOut {
    pub fn records_for(&self, ids: &[u64]) -> Vec<MseRecord> {
        ids.iter().flat_map(|id| self.by_task[id].iter().cloned()).collect()
    }
}

/// Trains with validation-based search on a grouped 75/25 split of `train`
/// and evaluates on `test`.
pub fn train_and_evaluate(
    train: &[MseRecord],
    test: &[MseRecord],
    budget: usize,
    mask: FeatureMask,
    seed: u64,
) -> Result<(TrainedMetaModel, Vec<TaskReport>)> {
    let (fit, val, _) = split_by_task(train, (0.75, 0.25), derive_seed(seed, &[TAG_SPLIT, 2]));
    if fit.is_empty() || val.is_empty() {
        bail!("training set has too few tasks for a train/validation split");
    }
    let model = train_with_search(&fit, &val, budget, mask, seed)?;
    let reports = evaluate_records(&model, test)?;
    Ok((model, reports))
}

pub fn mean_regret(reports: &[TaskReport]) -> f64 {
    let v: Vec<f64> = reports.iter().filter_map(|r| r.result.relative_regret).collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub sse: f64,
}

/// Least-squares fit of L = A + B / D^α: a grid over α ∈ [−2, 3] with A, B
/// solved in closed form at each grid point.
pub fn fit_power_law(sizes: &[f64], losses: &[f64]) -> Option<PowerLaw> {
    if sizes.len() != losses.len() || sizes.len() < 3 || sizes.iter().any(|&d| d <= 0.0) {
        return None;
    }
    let n = sizes.len() as f64;
    let mut best: Option<PowerLaw> = None;
    for k in -2000..=3000 {
        if k == 0 {
            continue;
        }
        let alpha = k as f64 * 1e-3;
        let z: Vec<f64> = sizes.iter().map(|d| d.powf(-alpha)).collect();
        let mz = z.iter().sum::<f64>() / n;
        let ml = losses.iter().sum::<f64>() / n;
        let szz: f64 = z.iter().map(|v| (v - mz).powi(2)).sum();
        if szz <= 0.0 {
            continue;
        }
        let szl: f64 = z.iter().zip(losses).map(|(v, l)| (v - mz) * (l - ml)).sum();
        let b = szl / szz;
        let a = ml - b * mz;
        let sse: f64 = z.iter().zip(losses).map(|(v, l)| (a + b * v - l).powi(2)).sum();
        if best.is_none_or(|p| sse < p.sse) {
            best = Some(PowerLaw { a, b, alpha, sse });
        }
    }
    best
}

/// Number of adjacent pairs where regret goes up with size.
pub fn inversions(losses: &[f64]) -> usize {
    losses.windows(2).filter(|w| w[1] > w[0]).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub size: usize,
    pub train_tasks: usize,
    pub regret: f64,
}

/// Regret on a fixed test set for each meta-dataset size. Size D trains on
/// the first ⌊(1 − test_fraction)·D⌋ tasks of the shuffled pool, the share a
/// D-task meta-dataset leaves after holding out its test part.
pub fn scaling_curve(records: &[MseRecord], config: &ExperimentConfig) -> Result<(Vec<ScalingPoint>, Option<PowerLaw>)> {
    let held = hold_out(records, config.test_fraction, config.seed);
    let pool = config.pool()?;
    let mut points = Vec::new();
    for &size in &config.sizes {
        let n = (((1.0 - config.test_fraction) * size as f64).floor() as usize).min(held.pool_ids.len());
        let train = held.records_for(&held.pool_ids[..n]);
        let seed = derive_seed(config.seed, &[TAG_TASK, size as u64]);
        let (_, reports) = pool.install(|| train_and_evaluate(&train, &held.test, config.budget, FeatureMask::default(), seed))?;
        points.push(ScalingPoint { size, train_tasks: n, regret: mean_regret(&reports) });
    }
    let fit = fit_power_law(
        &points.iter().map(|p| p.size as f64).collect::<Vec<_>>(),
        &points.iter().map(|p| p.regret).collect::<Vec<_>>(),
    );
    Ok((points, fit))
}

fn scaling_preset(config: &ExperimentConfig, dir: &Path) -> Result<PresetOutput> {
    let records = config.load_meta()?;
    let (points, fit) = scaling_curve(&records, config)?;
    let path = dir.join("scaling.csv");
    let mut out = String::from("size,train_tasks,relative_regret\n");
    for p in &points {
        out.push_str(&format!("{},{},{}\n", p.size, p.train_tasks, fmt17(p.regret)));
    }
    std::fs::write(&path, out)?;
    Ok(PresetOutput {
        files: vec![path],
        summary: serde_json::json!({
            "preset": config.preset,
            "points": points,
            "power_law": fit,
            "inversions": inversions(&points.iter().map(|p| p.regret).collect::<Vec<_>>()),
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub train_tasks: usize,
    pub relative_regret: f64,
    pub spearman: f64,
}

/// Feature subsets compared by the feature ablation. The two policy groups
/// keep the estimator flags so the model can tell candidates apart.
pub fn feature_ablation_masks() -> Vec<(&'static str, FeatureMask)> {
    use FeatureGroup::*;
    vec![
        ("estimator-only", FeatureMask::groups(&[Estimator])),
        ("policy-independent", FeatureMask::groups(&[PolicyIndependent, Estimator])),
        ("policy-dependent", FeatureMask::groups(&[PolicyDependent, Estimator])),
        ("all", FeatureMask::default()),
    ]
}

fn ablation_row(name: &str, train_tasks: usize, reports: &[TaskReport]) -> AblationRow {
    let sp: Vec<f64> = reports.iter().filter_map(|r| r.result.spearman).collect();
    AblationRow {
        name: name.to_string(),
        train_tasks,
        relative_regret: mean_regret(reports),
        spearman: sp.iter().sum::<f64>() / sp.len().max(1) as f64,
    }
}

fn write_ablation(dir: &Path, rows: &[AblationRow], reports: &[TaskReport], seed: u64) -> Result<Vec<PathBuf>> {
    let path = dir.join("ablation.csv");
    let mut out = String::from("subset,train_tasks,relative_regret,spearman\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.name, r.train_tasks, fmt17(r.relative_regret), fmt17(r.spearman)));
    }
    std::fs::write(&path, out)?;
    let (mut files, _) = write_reports(dir, reports, seed)?;
    files.insert(0, path);
    Ok(files)
}

pub fn feature_ablation(records: &[MseRecord], config: &ExperimentConfig) -> Result<(Vec<AblationRow>, Vec<TaskReport>)> {
    let held = hold_out(records, config.test_fraction, config.seed);
    let train = held.records_for(&held.pool_ids);
    let pool = config.pool()?;
    let mut rows = Vec::new();
    let mut all_reports = Vec::new();
    for (name, mask) in feature_ablation_masks() {
        let (_, mut reports) = pool.install(|| train_and_evaluate(&train, &held.test, config.budget, mask, config.seed))?;
        rows.push(ablation_row(name, held.pool_ids.len(), &reports));
        for r in &mut reports {
            r.method = name.to_string();
        }
        all_reports.extend(reports);
    }
    Ok((rows, all_reports))
}

fn ablation_features_preset(config: &ExperimentConfig, dir: &Path) -> Result<PresetOutput> {
    let records = config.load_meta()?;
    let (rows, reports) = feature_ablation(&records, config)?;
    let files = write_ablation(dir, &rows, &reports, config.seed)?;
    Ok(PresetOutput { files, summary: serde_json::json!({ "preset": config.preset, "rows": rows }) })
}

fn feature_index(name: &str) -> usize {
    FEATURE_NAMES.iter().position(|n| *n == name).expect("known feature")
}

/// Task-level mean of one feature over its records.
fn task_feature_means(by_task: &BTreeMap<u64, Vec<MseRecord>>, feature: usize) -> BTreeMap<u64, f64> {
    by_task
        .iter()
        .map(|(&id, rs)| (id, rs.iter().map(|r| r.features[feature]).sum::<f64>() / rs.len() as f64))
        .collect()
}

fn ablation_diversity_preset(config: &ExperimentConfig, dir: &Path) -> Result<PresetOutput> {
    let records = config.load_meta()?;
    let held = hold_out(&records, config.test_fraction, config.seed);
    let actions = task_feature_means(&held.by_task, feature_index("n_actions"));
    let kl = task_feature_means(&held.by_task, feature_index("kl_e_b"));
    let subsets: Vec<(&str, Vec<u64>)> = vec![
        ("all", held.pool_ids.clone()),
        ("n_actions<=5", held.pool_ids.iter().copied().filter(|id| actions[id] <= 5.0).collect()),
        ("kl<=0.1", held.pool_ids.iter().copied().filter(|id| kl[id] <= 0.1).collect()),
    ];
    let pool = config.pool()?;
    let mut rows = Vec::new();
    let mut all_reports = Vec::new();
    for (name, ids) in subsets {
        if ids.len() < 2 {
            bail!("subset {name} keeps only {} training tasks", ids.len());
        }
        let train = held.records_for(&ids);
        let (_, mut reports) =
            pool.install(|| train_and_evaluate(&train, &held.test, config.budget, FeatureMask::default(), config.seed))?;
        rows.push(ablation_row(name, ids.len(), &reports));
        for r in &mut reports {
            r.method = name.to_string();
        }
        all_reports.extend(reports);
    }
    let files = write_ablation(dir, &rows, &all_reports, config.seed)?;
    Ok(PresetOutput { files, summary: serde_json::json!({ "preset": config.preset, "rows": rows }) })
}

/// Candidate ids in enumeration order.
pub fn candidate_ids() -> Vec<String> {
    enumerate_candidates().iter().map(|c| c.id()).collect()
}

/// Distinct task ids in a record set.
pub fn task_ids(records: &[MseRecord]) -> BTreeSet<u64> {
    records.iter().map(|r| r.task_id).collect()
}
