//! Task directories.
//!
//! A task is stored as a directory holding
//!
//! * `manifest.json`: format tag, version, shape and (for synthetic tasks)
//!   the generator parameters and realization index;
//! * `logging.csv`: columns `x0..x{d-1},action,reward,pb0..pb{K-1}`;
//! * `evaluation.csv`: columns `pe0..pe{K-1}`;
//! * `rewards.csv` (optional): full reward matrix `r0..r{K-1}`.
//!
//! Every CSV starts with a header row. Floats are written with 17
//! significant digits so a save/load cycle is exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::generator::TaskGenParams;
use super::types::{BanditError, LoggingDataset, OpeTask};

pub const TASK_FORMAT: &str = "opesel-task";
pub const TASK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TaskIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Bandit(#[from] BanditError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub format: String,
    pub version: u32,
    pub n_rounds: usize,
    pub n_actions: usize,
    pub dim_context: usize,
    #[serde(default)]
    pub params: Option<TaskGenParams>,
    #[serde(default)]
    pub realization: Option<u64>,
    #[serde(default)]
    pub has_rewards: bool,
}

impl TaskManifest {
    pub fn for_task(task: &OpeTask) -> Self {
        Self {
            format: TASK_FORMAT.to_string(),
            version: TASK_FORMAT_VERSION,
            n_rounds: task.n_rounds(),
            n_actions: task.n_actions(),
            dim_context: task.dim_context(),
            params: None,
            realization: None,
            has_rewards: false,
        }
    }
}

/// A task loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTask {
    pub manifest: TaskManifest,
    pub task: OpeTask,
    pub reward_matrix: Option<Array2<f64>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TaskIoError + '_ {
    move |source| TaskIoError::Io { path: path.display().to_string(), source }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_matrix(path: &Path, prefix: &str, m: &Array2<f64>) -> Result<(), TaskIoError> {
    let mut out = String::new();
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("{prefix}{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

fn write_logging(path: &Path, log: &LoggingDataset) -> Result<(), TaskIoError> {
    let mut out = String::new();
    let mut header: Vec<String> = (0..log.dim_context()).map(|j| format!("x{j}")).collect();
    header.push("action".into());
    header.push("reward".into());
    header.extend((0..log.n_actions()).map(|a| format!("pb{a}")));
    out.push_str(&header.join(","));
    out.push('\n');
    let props = log.propensities();
    for t in 0..log.n_rounds() {
        let mut cells: Vec<String> = log.context(t).iter().map(|&v| fmt(v)).collect();
        cells.push(log.actions()[t].to_string());
        cells.push(fmt(log.rewards()[t]));
        cells.extend(props.row(t).iter().map(|&v| fmt(v)));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Writes `task` (and optionally its full reward matrix) under `dir`,
/// creating the directory if needed.
pub fn save_task(
    dir: &Path,
    task: &OpeTask,
    manifest: &TaskManifest,
    reward_matrix: Option<&Array2<f64>>,
) -> Result<(), TaskIoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = manifest.clone();
    manifest.has_rewards = reward_matrix.is_some();
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| TaskIoError::Format {
        path: manifest_path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut f = fs::File::create(&manifest_path).map_err(io_err(&manifest_path))?;
    f.write_all(json.as_bytes()).and_then(|_| f.write_all(b"\n")).map_err(io_err(&manifest_path))?;
    write_logging(&dir.join("logging.csv"), task.logging())?;
    write_matrix(&dir.join("evaluation.csv"), "pe", &task.evaluation().to_owned())?;
    let rewards_path = dir.join("rewards.csv");
    match reward_matrix {
        Some(r) => write_matrix(&rewards_path, "r", r)?,
        None if rewards_path.exists() => fs::remove_file(&rewards_path).map_err(io_err(&rewards_path))?,
        None => {}
    }
    Ok(())
}

fn read_table(path: &Path, expected_cols: usize) -> Result<Vec<Vec<f64>>, TaskIoError> {
    let bad = |message: String| TaskIoError::Format { path: path.display().to_string(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let n_header = reader.headers().map_err(|e| bad(e.to_string()))?.len();
    if n_header != expected_cols {
        return Err(bad(format!("expected {expected_cols} columns, header has {n_header}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| bad(format!("row {}: {s:?}: {e}", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn to_matrix(rows: &[Vec<f64>], cols: std::ops::Range<usize>) -> Array2<f64> {
    let w = cols.len();
    Array2::from_shape_fn((rows.len(), w), |(i, j)| rows[i][cols.start + j])
}

pub fn load_task(dir: &Path) -> Result<StoredTask, TaskIoError> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let bad = |path: &Path, message: String| TaskIoError::Format { path: path.display().to_string(), message };
    let manifest: TaskManifest =
        serde_json::from_str(&text).map_err(|e| bad(&manifest_path, e.to_string()))?;
    if manifest.format != TASK_FORMAT {
        return Err(bad(&manifest_path, format!("unknown format {:?}", manifest.format)));
    }
    if manifest.version != TASK_FORMAT_VERSION {
        return Err(bad(&manifest_path, format!("unsupported version {}", manifest.version)));
    }
    let (n, k, d) = (manifest.n_rounds, manifest.n_actions, manifest.dim_context);

    let log_path = dir.join("logging.csv");
    let rows = read_table(&log_path, d + 2 + k)?;
    if rows.len() != n {
        return Err(bad(&log_path, format!("manifest says {n} rounds, file has {}", rows.len())));
    }
    let mut actions = Vec::with_capacity(n);
    for (t, r) in rows.iter().enumerate() {
        let a = r[d];
        if a < 0.0 || a.fract() != 0.0 {
            return Err(bad(&log_path, format!("row {}: action {a} is not a non-negative integer", t + 1)));
        }
        actions.push(a as usize);
    }
    let rewards = rows.iter().map(|r| r[d + 1]).collect();
    let logging = LoggingDataset::new(to_matrix(&rows, 0..d), actions, rewards, to_matrix(&rows, d + 2..d + 2 + k))?;

    let eval_path = dir.join("evaluation.csv");
    let eval_rows = read_table(&eval_path, k)?;
    if eval_rows.len() != n {
        return Err(bad(&eval_path, format!("expected {n} rows, found {}", eval_rows.len())));
    }
    let task = OpeTask::new(logging, to_matrix(&eval_rows, 0..k))?;

    let rewards_path = dir.join("rewards.csv");
    let reward_matrix = if manifest.has_rewards {
        let r = read_table(&rewards_path, k)?;
        if r.len() != n {
            return Err(bad(&rewards_path, format!("expected {n} rows, found {}", r.len())));
        }
        Some(to_matrix(&r, 0..k))
    } else {
        None
    };
    Ok(StoredTask { manifest, task, reward_matrix })
}
