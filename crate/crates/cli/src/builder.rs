//! Resumable meta-dataset generation.
//!
//! Tasks are numbered from 0 and written in id order, each either as a
//! block of `n_gen · 21` records or as one skip marker. A second comment line
//! stores the generator space and seed so a rerun can check it is extending
//! the same build. An interrupted file is cut back to its last complete task
//! and continued from there, so the result matches an uninterrupted run
//! byte for byte.

use std::fs::{File, OpenOptions};
use std::io::{Seek, SeekFrom, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use opesel_core::bandit::{is_trivial_task, true_policy_value, GeneratorSpace, TaskGenParams, TaskGenerator};
use opesel_core::estimators::enumerate_candidates;
use opesel_core::features::{extract_task_features, with_estimator};
use opesel_core::meta_model::{format_record, header_lines, skip_line, MseRecord, SKIP_PREFIX};
use opesel_core::rng::{derive_seed, TAG_TASK};
use opesel_core::selection::{realization_seed, sweep_realization, GroundTruthSweep};

pub const BUILD_PREFIX: &str = "# build: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub space: GeneratorSpace,
    pub seed: u64,
}

impl BuildConfig {
    pub fn task_params(&self, task_id: u64) -> TaskGenParams {
        self.space.sample(derive_seed(self.seed, &[TAG_TASK, task_id]))
    }

    fn header(&self) -> String {
        format!("{}{BUILD_PREFIX}{}\n", header_lines(), serde_json::to_string(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskOutcome {
    Records(Vec<MseRecord>),
    Skipped(String),
}

/// Generates all realizations of one task, sweeps the candidates and returns
/// the records, or the reason the task was left out.
pub fn task_outcome(params: &TaskGenParams, task_id: u64) -> TaskOutcome {
    match task_records(params, task_id) {
        Ok(Some(records)) => TaskOutcome::Records(records),
        Ok(None) => TaskOutcome::Skipped("trivial (constant logged rewards)".into()),
        Err(e) => TaskOutcome::Skipped(format!("{e:#}")),
    }
}

fn task_records(params: &TaskGenParams, task_id: u64) -> Result<Option<Vec<MseRecord>>> {
    let generator = TaskGenerator::new(params.clone())?;
    let mut tasks = Vec::with_capacity(params.n_gen);
    for s in 0..params.n_gen as u64 {
        let task = generator.logging_task(s)?;
        if is_trivial_task(&task) {
            return Ok(None);
        }
        tasks.push(task);
    }
    let v_true = true_policy_value(&generator.ground_truth()?);
    let mut estimates = Vec::with_capacity(tasks.len());
    let mut features = Vec::with_capacity(tasks.len());
    for (s, task) in tasks.iter().enumerate() {
        estimates.push(sweep_realization(task, realization_seed(params.seed, s as u64))?);
        features.push(extract_task_features(task)?);
    }
    let mse = GroundTruthSweep { v_true, estimates }.mse();
    let candidates = enumerate_candidates();
    let mut out = Vec::with_capacity(tasks.len() * candidates.len());
    for (s, f) in features.iter().enumerate() {
        for (c, spec) in candidates.iter().enumerate() {
            out.push(MseRecord {
                task_id,
                realization: s as u32,
                estimator: *spec,
                features: with_estimator(f, spec).into_vec(),
                mse: mse[c],
            });
        }
    }
    Ok(Some(out))
}

fn render(task_id: u64, outcome: &TaskOutcome) -> String {
    match outcome {
        TaskOutcome::Records(records) => records.iter().map(format_record).collect(),
        TaskOutcome::Skipped(reason) => skip_line(task_id, reason),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildSummary {
    /// Tasks already present when the build started.
    pub resumed: u64,
    pub written: u64,
    pub skipped: u64,
}

/// Byte length of the complete-task prefix of an existing file and the
/// number of tasks it holds.
fn complete_prefix(text: &str, header: &str, per_task: usize) -> Result<(usize, u64)> {
    if !text.starts_with(header) {
        bail!("existing file was not produced by a build with this generator space and seed");
    }
    let mut offset = header.len();
    let mut end = offset;
    let mut next_id: u64 = 0;
    let mut block = 0usize;
    for line in text[header.len()..].split_inclusive('\n') {
        if !line.ends_with('\n') {
            break;
        }
        offset += line.len();
        if let Some(rest) = line.strip_prefix(SKIP_PREFIX) {
            let id: u64 = rest.split(':').next().unwrap_or("").trim().parse().context("bad skip marker")?;
            if block != 0 || id != next_id {
                break;
            }
            next_id += 1;
            end = offset;
            continue;
        }
        let id: u64 = match line.split(',').next().and_then(|s| s.parse().ok()) {
            Some(id) => id,
            None => break,
        };
        if id != next_id {
            break;
        }
        block += 1;
        if block == per_task {
            block = 0;
            next_id += 1;
            end = offset;
        }
    }
    Ok((end, next_id))
}

/// Builds (or extends) the meta-dataset at `path` to cover task ids
/// `0..n_tasks`, using `workers` threads.
pub fn build_meta_dataset(
    config: &BuildConfig,
    n_tasks: u64,
    workers: usize,
    path: &Path,
    mut progress: impl FnMut(u64, u64),
) -> Result<BuildSummary> {
    if n_tasks == 0 {
        bail!("n_tasks must be at least 1");
    }
    let header = config.header();
    let per_task = config.space.n_gen * enumerate_candidates().len();
    let mut summary = BuildSummary::default();
    let mut file = if path.exists() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let (end, done) = complete_prefix(&text, &header, per_task)?;
        summary.resumed = done;
        let mut f = OpenOptions::new().write(true).open(path)?;
        f.set_len(end as u64)?;
        f.seek(SeekFrom::End(0))?;
        f
    } else {
        let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        f.write_all(header.as_bytes())?;
        f.sync_data()?;
        f
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let chunk = (workers.max(1) * 2) as u64;
    let mut id = summary.resumed;
    while id < n_tasks {
        let ids: Vec<u64> = (id..(id + chunk).min(n_tasks)).collect();
        let outcomes: Vec<TaskOutcome> =
            pool.install(|| ids.par_iter().map(|&t| task_outcome(&config.task_params(t), t)).collect());
        for (&t, outcome) in ids.iter().zip(&outcomes) {
            file.write_all(render(t, outcome).as_bytes())?;
            file.flush()?;
            match outcome {
                TaskOutcome::Records(_) => summary.written += 1,
                TaskOutcome::Skipped(_) => summary.skipped += 1,
            }
        }
        file.sync_data()?;
        id += ids.len() as u64;
        progress(id, n_tasks);
    }
    Ok(summary)
}
