//! Supervised-to-bandit conversion of classification data.
//!
//! Features are used as given; no normalization or missing-value handling is
//! applied to the input file. The logistic-regression policies standardize
//! internally.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use thiserror::Error;

use opesel_core::bandit::{sample_categorical, BanditError, LoggingDataset, OpeTask};
use opesel_core::rng::{stream, TAG_CONVERT};
use opesel_core::selection::FullFeedbackTask;

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error("classification data: {0}")]
    Data(String),
    #[error("alpha must lie in [0, 1], got {0}")]
    Alpha(f64),
    #[error("split fraction {0} leaves one of the two subsets empty")]
    Split(f64),
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error(transparent)]
    Bandit(#[from] BanditError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    /// Original label strings, indexed by class.
    class_names: Vec<String>,
}

impl ClassificationDataset {
    /// Labels must cover `0..n_classes` without gaps.
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self, ConvertError> {
        let n = features.nrows();
        if labels.len() != n {
            return Err(ConvertError::Data(format!("{n} feature rows but {} labels", labels.len())));
        }
        if n < 2 {
            return Err(ConvertError::Data("need at least 2 samples".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(ConvertError::Data("non-finite feature value".into()));
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n_classes];
        for &y in &labels {
            seen[y] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(ConvertError::Data(format!("labels are not dense: class {missing} never occurs")));
        }
        if n_classes < 2 {
            return Err(ConvertError::Data("need at least 2 classes".into()));
        }
        let class_names = (0..n_classes).map(|c| c.to_string()).collect();
        Ok(Self { features, labels, n_classes, class_names })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }
}

/// Reads a CSV with a header row. All columns except the label column must
/// be numeric; label values are mapped to classes in sorted order (numeric
/// order when every label parses as a number).
pub fn read_classification_csv(path: &Path, label_column: Option<&str>) -> Result<ClassificationDataset, ConvertError> {
    let bad = |message: String| ConvertError::Csv { path: path.display().to_string(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.len() < 2 {
        return Err(bad("need at least one feature column and a label column".into()));
    }
    let label_idx = match label_column {
        Some(name) => headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("no column named {name:?}")))?,
        None => headers.len() - 1,
    };
    let mut rows: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        for (j, cell) in rec.iter().enumerate() {
            if j == label_idx {
                raw_labels.push(cell.trim().to_string());
            } else {
                let v = cell.trim().parse::<f64>().map_err(|e| bad(format!("row {}, column {}: {cell:?}: {e}", i + 1, j + 1)))?;
                rows.push(v);
            }
        }
    }
    let d = headers.len() - 1;
    let features = Array2::from_shape_vec((raw_labels.len(), d), rows).map_err(|e| bad(e.to_string()))?;
    let mut names: Vec<String> = raw_labels.clone();
    names.sort();
    names.dedup();
    if names.iter().all(|s| s.parse::<f64>().is_ok()) {
        names.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let labels = raw_labels.iter().map(|s| index[s.as_str()]).collect();
    let mut data = ClassificationDataset::new(features, labels)?;
    data.class_names = names;
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxConfig {
    pub iterations: usize,
    pub step: f64,
    pub l2: f64,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        Self { iterations: 300, step: 0.5, l2: 1e-4 }
    }
}

/// Multinomial logistic regression on standardized features. Classes absent
/// from the training rows are never predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    mean: Array1<f64>,
    scale: Array1<f64>,
    /// (d + 1) × K, last row is the intercept.
    weights: Array2<f64>,
    present: Vec<bool>,
}

impl SoftmaxClassifier {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, config: &SoftmaxConfig) -> Self {
        let (n, d) = x.dim();
        let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(d));
        let scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
        let mut z = Array2::ones((n, d + 1));
        z.slice_mut(ndarray::s![.., ..d]).assign(&((&x - &mean) / &scale));
        let mut present = vec![false; n_classes];
        let mut onehot = Array2::<f64>::zeros((n, n_classes));
        for (t, &c) in y.iter().enumerate() {
            onehot[[t, c]] = 1.0;
            present[c] = true;
        }
        let mut weights = Array2::<f64>::zeros((d + 1, n_classes));
        for _ in 0..config.iterations {
            let mut p = z.dot(&weights);
            for mut row in p.rows_mut() {
                softmax_in_place(&mut row, &present);
            }
            let mut grad = z.t().dot(&(p - &onehot)) / n as f64;
            grad.slice_mut(ndarray::s![..d, ..]).scaled_add(config.l2, &weights.slice(ndarray::s![..d, ..]));
            weights.scaled_add(-config.step, &grad);
        }
        Self { mean, scale, weights, present }
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, x: ArrayView1<f64>) -> usize {
        let d = self.mean.len();
        let mut best = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..self.weights.ncols() {
            if !self.present[c] {
                continue;
            }
            let mut s = self.weights[[d, c]];
            for j in 0..d {
                s += (x[j] - self.mean[j]) / self.scale[j] * self.weights[[j, c]];
            }
            if best == usize::MAX || s > best_score {
                best = c;
                best_score = s;
            }
        }
        best
    }

    pub fn predict_all(&self, x: ArrayView2<f64>) -> Vec<usize> {
        x.rows().into_iter().map(|r| self.predict(r)).collect()
    }
}

fn softmax_in_place(row: &mut ndarray::ArrayViewMut1<f64>, present: &[bool]) {
    let max = row.iter().zip(present).filter(|(_, p)| **p).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (v, &p) in row.iter_mut().zip(present) {
        *v = if p { (*v - max).exp() } else { 0.0 };
        sum += *v;
    }
    row.mapv_inplace(|v| v / sum);
}

/// α·one-hot(det) + (1 − α)/K for every row.
pub fn blend_policy(deterministic: &[usize], n_classes: usize, alpha: f64) -> Array2<f64> {
    let uniform = (1.0 - alpha) / n_classes as f64;
    let mut pi = Array2::from_elem((deterministic.len(), n_classes), uniform);
    for (t, &a) in deterministic.iter().enumerate() {
        pi[[t, a]] += alpha;
    }
    pi
}

/// Conversion output with the pieces needed to audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvertedTask {
    pub full: FullFeedbackTask,
    /// Rows of the input that became logging rounds, in round order.
    pub logging_rows: Vec<usize>,
    pub true_labels: Vec<usize>,
    pub deterministic_b: Vec<usize>,
    pub deterministic_e: Vec<usize>,
    pub alpha_b: f64,
    pub alpha_e: f64,
}

impl ConvertedTask {
    /// Share of logging rounds where the evaluation classifier is correct.
    pub fn evaluation_accuracy(&self) -> f64 {
        let hits = self.deterministic_e.iter().zip(&self.true_labels).filter(|(a, b)| a == b).count();
        hits as f64 / self.true_labels.len() as f64
    }
}

/// Splits the data in two; the first part becomes logging data, the second
/// trains the logging and evaluation classifiers on disjoint halves.
pub fn convert_classification_to_bandit(
    data: &ClassificationDataset,
    alpha_b: f64,
    alpha_e: f64,
    split_fraction: f64,
    seed: u64,
) -> Result<ConvertedTask, ConvertError> {
    for a in [alpha_b, alpha_e] {
        if !(0.0..=1.0).contains(&a) {
            return Err(ConvertError::Alpha(a));
        }
    }
    let n = data.n_samples();
    let n_log = (split_fraction * n as f64).round() as usize;
    if !(split_fraction > 0.0 && split_fraction < 1.0) || n_log == 0 || n_log >= n {
        return Err(ConvertError::Split(split_fraction));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, &[TAG_CONVERT, 0]));
    let (logging_rows, policy_rows) = order.split_at(n_log);
    let (rows_b, rows_e) = if policy_rows.len() >= 2 {
        let b: Vec<usize> = policy_rows.iter().step_by(2).copied().collect();
        let e: Vec<usize> = policy_rows.iter().skip(1).step_by(2).copied().collect();
        (b, e)
    } else {
        (policy_rows.to_vec(), policy_rows.to_vec())
    };
    let k = data.n_classes();
    let fit = |rows: &[usize]| {
        let x = data.features.select(Axis(0), rows);
        let y: Vec<usize> = rows.iter().map(|&i| data.labels[i]).collect();
        SoftmaxClassifier::fit(x.view(), &y, k, &SoftmaxConfig::default())
    };
    let clf_b = fit(&rows_b);
    let clf_e = fit(&rows_e);

    let contexts = data.features.select(Axis(0), logging_rows);
    let true_labels: Vec<usize> = logging_rows.iter().map(|&i| data.labels[i]).collect();
    let det_b = clf_b.predict_all(contexts.view());
    let det_e = clf_e.predict_all(contexts.view());
    let pi_b = blend_policy(&det_b, k, alpha_b);
    let pi_e = blend_policy(&det_e, k, alpha_e);

    let mut rng = stream(seed, &[TAG_CONVERT, 1]);
    let actions: Vec<usize> = (0..n_log).map(|t| sample_categorical(&mut rng, pi_b.row(t))).collect();
    let rewards: Vec<f64> = actions.iter().zip(&true_labels).map(|(a, y)| if a == y { 1.0 } else { 0.0 }).collect();
    let mut reward_matrix = Array2::zeros((n_log, k));
    for (t, &y) in true_labels.iter().enumerate() {
        reward_matrix[[t, y]] = 1.0;
    }
    let logging = LoggingDataset::new(contexts, actions, rewards, pi_b)?;
    let task = OpeTask::new(logging, pi_e)?;
    Ok(ConvertedTask {
        full: FullFeedbackTask { task, reward_matrix },
        logging_rows: logging_rows.to_vec(),
        true_labels,
        deterministic_b: det_b,
        deterministic_e: det_e,
        alpha_b,
        alpha_e,
    })
}
