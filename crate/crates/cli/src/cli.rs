//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use opesel_core::bandit::io::{load_task, save_task, StoredTask, TaskManifest};
use opesel_core::bandit::GeneratorSpace;
use opesel_core::features::{FeatureGroup, FEATURE_NAMES};
use opesel_core::meta_model::{
    load, read_file, save, split_by_task, train_with_search, write_records, FeatureMask, MseRecord,
};
use opesel_core::pasif::{pasif_select, FitConfig, DEFAULT_LAMBDA_GRID};
use opesel_core::rng::{derive_seed, TAG_SPLIT};
use opesel_core::selection::{autoope_select, realization_seed, sweep_realization, GroundTruthSweep, SelectionResult};

use crate::builder::{build_meta_dataset, BuildConfig};
use crate::convert::{convert_classification_to_bandit, read_classification_csv};
use crate::presets::{run_experiment_preset, ExperimentConfig, PRESETS};
use crate::report::{aggregate, evaluate_records, fmt17, write_aggregate, write_task_reports, TaskReport};

#[derive(Debug, Parser)]
#[command(name = "opesel", version, about = "Select an off-policy evaluation estimator for a logged bandit dataset")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output path (file or directory, depending on the command).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn workers(&self) -> usize {
        self.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1)
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureSet {
    All,
    EstimatorOnly,
    PolicyIndependent,
    PolicyDependent,
}

impl FeatureSet {
    fn mask(self) -> FeatureMask {
        use FeatureGroup::*;
        match self {
            FeatureSet::All => FeatureMask::default(),
            FeatureSet::EstimatorOnly => FeatureMask::groups(&[Estimator]),
            FeatureSet::PolicyIndependent => FeatureMask::groups(&[PolicyIndependent, Estimator]),
            FeatureSet::PolicyDependent => FeatureMask::groups(&[PolicyDependent, Estimator]),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or extend a synthetic meta-dataset (CSV).
    Generate(GenerateArgs),
    /// Train the meta-model with hyperparameter search.
    Train(TrainArgs),
    /// Zero-shot estimator selection on a task directory.
    Select(SelectArgs),
    /// Score a model against ground-truth MSEs.
    Evaluate(EvaluateArgs),
    /// Turn a labelled CSV into a bandit task directory.
    Convert(ConvertArgs),
    /// Estimator selection with the PAS-IF baseline.
    BaselinePasif(PasifArgs),
    /// Mean-decrease-in-impurity feature importances of a model.
    Importance(ImportanceArgs),
    /// Run a named experiment.
    Preset(PresetArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n_tasks: u64,
    #[arg(long, default_value_t = 10)]
    pub n_gen: usize,
    #[arg(long, default_value_t = 100_000)]
    pub n_gt: usize,
    #[arg(long, default_value_t = 2)]
    pub min_actions: usize,
    #[arg(long, default_value_t = 20)]
    pub max_actions: usize,
    #[arg(long, default_value_t = 100)]
    pub min_rounds: usize,
    #[arg(long, default_value_t = 8000)]
    pub max_rounds: usize,
    #[arg(long, default_value_t = 1)]
    pub min_dim: usize,
    #[arg(long, default_value_t = 10)]
    pub max_dim: usize,
    #[arg(long, default_value_t = 10.0)]
    pub beta_bound: f64,
}

impl GenerateArgs {
    pub fn space(&self) -> Result<GeneratorSpace> {
        let ranges = [
            ("actions", self.min_actions, self.max_actions),
            ("rounds", self.min_rounds, self.max_rounds),
            ("dim", self.min_dim, self.max_dim),
        ];
        for (name, lo, hi) in ranges {
            if lo > hi {
                bail!("--min-{name} ({lo}) exceeds --max-{name} ({hi})");
            }
        }
        if self.min_actions < 2 || self.min_rounds == 0 || self.min_dim == 0 {
            bail!("need at least 2 actions, 1 round and 1 context dimension");
        }
        if self.n_gen == 0 || self.n_gt == 0 {
            bail!("--n-gen and --n-gt must be positive");
        }
        if !(self.beta_bound > 0.0 && self.beta_bound.is_finite()) {
            bail!("--beta-bound must be positive");
        }
        Ok(GeneratorSpace {
            n_actions: (self.min_actions, self.max_actions),
            n_rounds: (self.min_rounds, self.max_rounds),
            dim_context: (self.min_dim, self.max_dim),
            beta_bound: self.beta_bound,
            n_gen: self.n_gen,
            n_gt: self.n_gt,
            ..GeneratorSpace::default()
        })
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub meta: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub budget: usize,
    /// Share of tasks held out as a test set and written next to the model.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Share of tasks used for validation during the search.
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    #[arg(long, value_enum, default_value_t = FeatureSet::All)]
    pub features: FeatureSet,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub task: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Held-out meta-dataset records.
    #[arg(long, conflicts_with = "task")]
    pub meta: Option<PathBuf>,
    /// Task directory with generator parameters or a full reward matrix.
    #[arg(long)]
    pub task: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Label column name (default: last column).
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long, default_value_t = 0.2)]
    pub alpha_b: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha_e: f64,
    /// Share of rows used as logging data; the rest trains the policies.
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
}

#[derive(Debug, Args)]
pub struct PasifArgs {
    #[arg(long)]
    pub task: PathBuf,
    /// Regularization weights tried (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    pub name: String,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub n_data: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_rounds: usize,
    #[arg(long, default_value_t = 100_000)]
    pub n_gt: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![125, 250, 500, 1000, 2000])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub budget: usize,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0.2)]
    pub alpha_b: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.25, 0.5, 0.75, 0.99])]
    pub alpha_e: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub bootstrap_count: usize,
    #[arg(long, default_value_t = 0.9)]
    pub bootstrap_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    /// Also run the PAS-IF baseline.
    #[arg(long)]
    pub with_pasif: bool,
}

/// Parses `argv` and runs the command. Usage errors print clap's message and
/// return 2; failures print a one-line diagnostic and return 1.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            1
        }
    }
}

/// Runs a parsed command and returns what it prints on success.
pub fn execute(cli: &Cli) -> Result<String> {
    let c = &cli.common;
    match &cli.command {
        Command::Generate(a) => generate(c, a),
        Command::Train(a) => train(c, a),
        Command::Select(a) => select(a),
        Command::Evaluate(a) => evaluate(c, a),
        Command::Convert(a) => convert(c, a),
        Command::BaselinePasif(a) => baseline_pasif(c, a),
        Command::Importance(a) => importance(c, a),
        Command::Preset(a) => preset(c, a),
    }
}

fn generate(c: &Common, a: &GenerateArgs) -> Result<String> {
    let config = BuildConfig { space: a.space()?, seed: c.seed };
    let out = c.out_or("meta.csv");
    let summary = build_meta_dataset(&config, a.n_tasks, c.workers(), &out, |done, total| {
        eprintln!("{done}/{total} tasks");
    })?;
    Ok(format!(
        "{}: {} tasks written, {} skipped, {} already present\n",
        out.display(),
        summary.written,
        summary.skipped,
        summary.resumed
    ))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn train(c: &Common, a: &TrainArgs) -> Result<String> {
    let data = read_file(&a.meta).with_context(|| format!("reading {}", a.meta.display()))?;
    if !(a.test_fraction >= 0.0 && a.val_fraction > 0.0 && a.test_fraction + a.val_fraction < 1.0) {
        bail!("--test-fraction and --val-fraction must be nonnegative, positive and sum to less than 1");
    }
    let train_share = 1.0 - a.test_fraction - a.val_fraction;
    let (fit, val, test) = split_by_task(&data.records, (train_share, a.val_fraction), derive_seed(c.seed, &[TAG_SPLIT]));
    if fit.is_empty() || val.is_empty() {
        bail!("meta-dataset {} has too few tasks to split", a.meta.display());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(c.workers()).build()?;
    let model = pool.install(|| train_with_search(&fit, &val, a.budget, a.features.mask(), c.seed))?;
    let out = c.out_or("model.bin");
    save(&model, &out).with_context(|| format!("writing {}", out.display()))?;
    let search_path = with_suffix(&out, ".search.json");
    std::fs::write(&search_path, serde_json::to_string_pretty(&model.metadata)? + "\n")?;
    let mut text = format!("model: {}\nsearch record: {}\n", out.display(), search_path.display());
    if !test.is_empty() {
        let test_path = with_suffix(&out, ".test.csv");
        write_records(std::io::BufWriter::new(std::fs::File::create(&test_path)?), &test)?;
        let _ = writeln!(text, "held-out records: {}", test_path.display());
    }
    if let Some(search) = &model.metadata.search {
        let best = &search.trials[search.best_index];
        let _ = writeln!(text, "best validation regret: {}", fmt17(best.validation_regret));
    }
    Ok(text)
}

fn prediction_table(sel: &SelectionResult) -> String {
    let mut text = format!("selected: {}\n", sel.selected.id());
    let _ = writeln!(text, "{:<16} {:>24}", "estimator", "predicted_mse");
    for (spec, mse) in sel.candidates.iter().zip(&sel.predicted_mse) {
        let _ = writeln!(text, "{:<16} {:>24}", spec.id(), fmt17(*mse));
    }
    text
}

fn select(a: &SelectArgs) -> Result<String> {
    let model = load(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let stored = load_task(&a.task)?;
    Ok(prediction_table(&autoope_select(&model, &stored.task)?))
}

/// Ground-truth MSE of every candidate for a stored task: over the
/// generator's realizations for synthetic tasks, or against the exact value
/// of a full reward matrix (single realization) otherwise.
fn stored_truth(stored: &StoredTask, seed: u64) -> Result<Vec<f64>> {
    if let Some(params) = &stored.manifest.params {
        let generator = opesel_core::bandit::TaskGenerator::new(params.clone())?;
        let v_true = opesel_core::bandit::true_policy_value(&generator.ground_truth()?);
        let estimates = (0..params.n_gen as u64)
            .map(|s| Ok(sweep_realization(&generator.logging_task(s)?, realization_seed(params.seed, s))?))
            .collect::<Result<Vec<_>>>()?;
        return Ok(GroundTruthSweep { v_true, estimates }.mse());
    }
    if let Some(r) = &stored.reward_matrix {
        let v_true = opesel_core::selection::ground_truth_value_classification(stored.task.evaluation(), r.view())?;
        let estimates = vec![sweep_realization(&stored.task, seed)?];
        return Ok(GroundTruthSweep { v_true, estimates }.mse());
    }
    bail!("task has neither generator parameters nor a reward matrix, so its ground truth is unknown")
}

fn write_report_files(out: &Path, reports: &[TaskReport], seed: u64) -> Result<String> {
    std::fs::create_dir_all(out)?;
    let per_task = out.join("per_task.csv");
    let agg_path = out.join("aggregate.csv");
    write_task_reports(&per_task, reports)?;
    let agg = aggregate(reports, |r| r.method.clone(), seed);
    write_aggregate(&agg_path, &agg)?;
    let mut text = String::new();
    for row in &agg {
        let _ = writeln!(
            text,
            "{} {}: mean {} (95% CI {} to {}, n = {})",
            row.method,
            row.metric,
            fmt17(row.mean),
            fmt17(row.lower),
            fmt17(row.upper),
            row.n
        );
    }
    let _ = writeln!(text, "reports: {}, {}", per_task.display(), agg_path.display());
    Ok(text)
}

fn evaluate(c: &Common, a: &EvaluateArgs) -> Result<String> {
    let model = load(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let reports = match (&a.meta, &a.task) {
        (Some(meta), None) => {
            let data = read_file(meta).with_context(|| format!("reading {}", meta.display()))?;
            evaluate_records(&model, &data.records)?
        }
        (None, Some(dir)) => {
            let stored = load_task(dir)?;
            let truth = stored_truth(&stored, c.seed)?;
            let result = autoope_select(&model, &stored.task)?.with_ground_truth(truth)?;
            vec![TaskReport { task: dir.display().to_string(), method: "autoope".into(), result }]
        }
        _ => bail!("evaluate needs exactly one of --meta or --task"),
    };
    write_report_files(&c.out_or("evaluation"), &reports, c.seed)
}

fn convert(c: &Common, a: &ConvertArgs) -> Result<String> {
    let data = read_classification_csv(&a.data, a.label_column.as_deref())?;
    let converted = convert_classification_to_bandit(&data, a.alpha_b, a.alpha_e, a.split, c.seed)?;
    let out = c.out_or("task");
    let manifest = TaskManifest::for_task(&converted.full.task);
    save_task(&out, &converted.full.task, &manifest, Some(&converted.full.reward_matrix))?;
    Ok(format!(
        "{}: {} logging rounds, {} actions, true policy value {}\n",
        out.display(),
        converted.full.task.n_rounds(),
        data.n_classes(),
        fmt17(converted.full.true_value()?)
    ))
}

fn baseline_pasif(c: &Common, a: &PasifArgs) -> Result<String> {
    let stored = load_task(&a.task)?;
    let grid = if a.lambda.is_empty() { DEFAULT_LAMBDA_GRID.to_vec() } else { a.lambda.clone() };
    let config = FitConfig { epochs: a.epochs, ..FitConfig::default() };
    let (sel, lambda) = pasif_select(&stored.task, &grid, &config, c.seed)?;
    let mut text = format!("lambda: {}\n", fmt17(lambda));
    text.push_str(&prediction_table(&sel));
    if stored.manifest.params.is_some() || stored.reward_matrix.is_some() {
        let result = sel.with_ground_truth(stored_truth(&stored, c.seed)?)?;
        let reports = vec![TaskReport { task: a.task.display().to_string(), method: "pas-if".into(), result }];
        text.push_str(&write_report_files(&c.out_or("pasif"), &reports, c.seed)?);
    }
    Ok(text)
}

fn importance(c: &Common, a: &ImportanceArgs) -> Result<String> {
    let model = load(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let imp = model.mdi_importance();
    let mut order: Vec<usize> = (0..imp.len()).collect();
    order.sort_by(|&i, &j| imp[j].total_cmp(&imp[i]).then(i.cmp(&j)));
    let mut csv = String::from("feature,importance\n");
    let mut text = String::new();
    for &i in &order {
        let _ = writeln!(csv, "{},{}", FEATURE_NAMES[i], fmt17(imp[i]));
        let _ = writeln!(text, "{:<26} {}", FEATURE_NAMES[i], fmt17(imp[i]));
    }
    if let Some(out) = &c.out {
        std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(text)
}

fn preset(c: &Common, a: &PresetArgs) -> Result<String> {
    let mut config = ExperimentConfig::new(&a.name, c.out_or("results"));
    config.seed = c.seed;
    config.workers = c.workers();
    config.model = a.model.clone();
    config.meta = a.meta.clone();
    config.data = a.data.clone();
    config.label_column = a.label_column.clone();
    config.n_data = a.n_data;
    config.n_rounds = a.n_rounds;
    config.n_gt = a.n_gt;
    config.sizes = a.sizes.clone();
    config.budget = a.budget;
    config.test_fraction = a.test_fraction;
    config.alpha_b = a.alpha_b;
    config.alpha_e = a.alpha_e.clone();
    config.bootstrap_count = a.bootstrap_count;
    config.bootstrap_fraction = a.bootstrap_fraction;
    config.split_fraction = a.split;
    config.with_pasif = a.with_pasif;
    let out = run_experiment_preset(&config)?;
    let mut text = String::new();
    for f in &out.files {
        let _ = writeln!(text, "{}", f.display());
    }
    Ok(text)
}

/// Records read from a file, for callers that only need the rows.
pub fn read_meta(path: &Path) -> Result<Vec<MseRecord>> {
    Ok(read_file(path).map_err(|e| anyhow!("{}: {e}", path.display()))?.records)
}
