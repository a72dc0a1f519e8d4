//! Evaluation records and their CSV form.
//!
//! Numbers are written with 17 significant digits; missing values are empty
//! cells. Aggregates carry 95% percentile-bootstrap intervals over 1000
//! resamples.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use opesel_core::estimators::{enumerate_candidates, EstimatorSpec};
use opesel_core::meta_model::{MseRecord, TrainedMetaModel};
use opesel_core::selection::{bootstrap_ci, SelectionResult};

pub const CI_RESAMPLES: usize = 1000;
pub const CI_LEVEL: f64 = 0.95;

pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt17).unwrap_or_default()
}

/// One evaluated selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub method: String,
    pub result: SelectionResult,
}

impl TaskReport {
    pub fn best(&self) -> Option<EstimatorSpec> {
        let truth = self.result.ground_truth_mse.as_ref()?;
        let i = opesel_core::selection::argmin_first(truth)?;
        Some(self.result.candidates[i])
    }
}

pub fn write_task_reports(path: &Path, reports: &[TaskReport]) -> Result<()> {
    let candidates = enumerate_candidates();
    let mut out = String::from("task,method,selected,best,relative_regret,absolute_regret,spearman");
    for c in &candidates {
        out.push_str(&format!(",pred_{}", c.id()));
    }
    for c in &candidates {
        out.push_str(&format!(",true_{}", c.id()));
    }
    out.push('\n');
    for r in reports {
        let res = &r.result;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            r.task,
            r.method,
            res.selected.id(),
            r.best().map(|b| b.id()).unwrap_or_default(),
            opt(res.relative_regret),
            opt(res.absolute_regret),
            opt(res.spearman)
        ));
        for c in &candidates {
            let i = res.candidates.iter().position(|x| x == c);
            out.push(',');
            out.push_str(&opt(i.map(|i| res.predicted_mse[i])));
        }
        for c in &candidates {
            let i = res.candidates.iter().position(|x| x == c);
            out.push(',');
            out.push_str(&opt(i.and_then(|i| res.ground_truth_mse.as_ref().map(|t| t[i]))));
        }
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub method: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

fn summarize(group: &str, method: &str, metric: &str, values: &[f64], seed: u64) -> Option<AggregateRow> {
    let ci = bootstrap_ci(values, CI_RESAMPLES, CI_LEVEL, seed).ok()?;
    Some(AggregateRow {
        group: group.into(),
        method: method.into(),
        metric: metric.into(),
        n: values.len(),
        mean: ci.mean,
        lower: ci.lower,
        upper: ci.upper,
    })
}

/// Mean relative regret and Spearman per (group, method); `group_of` maps a
/// report to its group label.
pub fn aggregate(reports: &[TaskReport], group_of: impl Fn(&TaskReport) -> String, seed: u64) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String), Vec<&TaskReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((group_of(r), r.method.clone())).or_default().push(r);
    }
    let mut rows = Vec::new();
    for ((g, m), rs) in groups {
        let regret: Vec<f64> = rs.iter().filter_map(|r| r.result.relative_regret).collect();
        let spearman: Vec<f64> = rs.iter().filter_map(|r| r.result.spearman).collect();
        rows.extend(summarize(&g, &m, "relative_regret", &regret, seed));
        rows.extend(summarize(&g, &m, "spearman", &spearman, seed));
    }
    rows
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut out = String::from("group,method,metric,n,mean,ci_lower,ci_upper\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.group,
            r.method,
            r.metric,
            r.n,
            fmt17(r.mean),
            fmt17(r.lower),
            fmt17(r.upper)
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Selection on every (task, realization) instance of held-out meta-dataset
/// records, scored against the stored ground-truth MSEs.
pub fn evaluate_records(model: &TrainedMetaModel, records: &[MseRecord]) -> Result<Vec<TaskReport>> {
    let candidates = enumerate_candidates();
    let mut instances: BTreeMap<(u64, u32), Vec<&MseRecord>> = BTreeMap::new();
    for r in records {
        instances.entry((r.task_id, r.realization)).or_default().push(r);
    }
    let mut reports = Vec::with_capacity(instances.len());
    for ((task, realization), recs) in instances {
        let mut rows = Vec::with_capacity(candidates.len());
        let mut truth = Vec::with_capacity(candidates.len());
        for c in &candidates {
            let r = recs
                .iter()
                .find(|r| r.estimator == *c)
                .with_context(|| format!("task {task} realization {realization} has no record for {}", c.id()))?;
            rows.push(r.features.clone());
            truth.push(r.mse);
        }
        let predicted = model.predict_many(&rows)?;
        let result = SelectionResult::from_predictions(candidates.clone(), predicted).with_ground_truth(truth)?;
        reports.push(TaskReport { task: format!("{task}/{realization}"), method: "autoope".into(), result });
    }
    Ok(reports)
}

/// Expected relative regret of picking a candidate uniformly at random.
pub fn uniform_random_regret(truth: &[f64]) -> Option<f64> {
    let best = truth.iter().copied().fold(f64::INFINITY, f64::min);
    if best <= 0.0 || truth.is_empty() {
        return None;
    }
    Some(truth.iter().map(|m| (m - best) / best).sum::<f64>() / truth.len() as f64)
}

/// Paired one-sided t-test of H1: mean(a − b) < 0. Returns (t, p).
pub fn paired_t_test_less(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return None;
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).ok()?;
    Some((t, dist.cdf(t)))
}
