//! Feature and target preprocessing, fitted on training rows only.
//!
//! Steps, in order: one-hot encode categorical columns; clip numerical values
//! at 1e10; apply `log1p` to nonnegative columns whose skewness exceeds 1;
//! scale to (0, 1), or to (-1, 1) when the training minimum is negative.
//! The target is clipped, log1p-transformed and scaled to (0, 1).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MetaModelError;
use crate::features::skewness;

pub const CLIP_CEILING: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: f64,
    pub max: f64,
    /// Map to (-1, 1) instead of (0, 1).
    pub symmetric: bool,
}

impl Scaler {
    pub fn fit(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { min, max, symmetric: min < 0.0 }
    }

    pub fn forward(&self, v: f64) -> f64 {
        let range = self.max - self.min;
        if range <= 0.0 {
            return 0.0;
        }
        let u = (v - self.min) / range;
        if self.symmetric {
            2.0 * u - 1.0
        } else {
            u
        }
    }

    pub fn inverse(&self, s: f64) -> f64 {
        let range = self.max - self.min;
        if range <= 0.0 {
            return self.min;
        }
        let u = if self.symmetric { (s + 1.0) / 2.0 } else { s };
        self.min + u * range
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnTransform {
    /// One output column per category seen in training, in ascending order.
    OneHot { categories: Vec<f64> },
    Numeric { log1p: bool, scaler: Scaler },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub scaler: Scaler,
}

impl TargetTransform {
    pub fn fit(targets: &[f64]) -> Self {
        let t: Vec<f64> = targets.iter().map(|&y| target_pre(y)).collect();
        Self { scaler: Scaler { symmetric: false, ..Scaler::fit(&t) } }
    }

    pub fn forward(&self, y: f64) -> f64 {
        self.scaler.forward(target_pre(y))
    }

    pub fn inverse(&self, s: f64) -> f64 {
        self.scaler.inverse(s).exp_m1()
    }
}

fn target_pre(y: f64) -> f64 {
    y.clamp(0.0, CLIP_CEILING).ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessorState {
    pub columns: Vec<ColumnTransform>,
    pub target: TargetTransform,
}

impl PreprocessorState {
    /// `categorical[j]` marks source column `j` for one-hot encoding.
    pub fn fit(x: &[Vec<f64>], y: &[f64], categorical: &[bool]) -> Result<Self, MetaModelError> {
        if x.len() < 2 || y.len() != x.len() {
            return Err(MetaModelError::Data(format!(
                "preprocessing needs at least 2 rows with matching targets, got {} rows and {} targets",
                x.len(),
                y.len()
            )));
        }
        let n_cols = categorical.len();
        if x.iter().any(|r| r.len() != n_cols) {
            return Err(MetaModelError::Data("ragged feature rows".into()));
        }
        let columns = (0..n_cols)
            .map(|j| {
                let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
                if categorical[j] {
                    let mut cats = col;
                    cats.sort_by(f64::total_cmp);
                    cats.dedup();
                    ColumnTransform::OneHot { categories: cats }
                } else {
                    let clipped: Vec<f64> = col.iter().map(|v| v.min(CLIP_CEILING)).collect();
                    let min = clipped.iter().copied().fold(f64::INFINITY, f64::min);
                    let log1p = min >= 0.0 && skewness(&clipped) > 1.0;
                    let transformed: Vec<f64> =
                        if log1p { clipped.iter().map(|v| v.ln_1p()).collect() } else { clipped };
                    ColumnTransform::Numeric { log1p, scaler: Scaler::fit(&transformed) }
                }
            })
            .collect();
        Ok(Self { columns, target: TargetTransform::fit(y) })
    }

    pub fn n_inputs(&self) -> usize {
        self.columns.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c {
                ColumnTransform::OneHot { categories } => categories.len(),
                ColumnTransform::Numeric { .. } => 1,
            })
            .sum()
    }

    /// Source column of every output column.
    pub fn output_sources(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (j, c) in self.columns.iter().enumerate() {
            let width = match c {
                ColumnTransform::OneHot { categories } => categories.len(),
                ColumnTransform::Numeric { .. } => 1,
            };
            out.extend(std::iter::repeat_n(j, width));
        }
        out
    }

    pub fn transform_row(&self, row: &[f64], out: &mut Vec<f64>) -> Result<(), MetaModelError> {
        if row.len() != self.columns.len() {
            return Err(MetaModelError::Schema(format!(
                "expected {} features, got {}",
                self.columns.len(),
                row.len()
            )));
        }
        for (&v, c) in row.iter().zip(&self.columns) {
            match c {
                ColumnTransform::OneHot { categories } => {
                    out.extend(categories.iter().map(|&k| if k == v { 1.0 } else { 0.0 }));
                }
                ColumnTransform::Numeric { log1p, scaler } => {
                    let v = v.min(CLIP_CEILING);
                    let v = if *log1p { v.max(0.0).ln_1p() } else { v };
                    out.push(scaler.forward(v));
                }
            }
        }
        Ok(())
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Result<Array2<f64>, MetaModelError> {
        let width = self.n_outputs();
        let mut flat = Vec::with_capacity(x.len() * width);
        for r in x {
            self.transform_row(r, &mut flat)?;
        }
        Ok(Array2::from_shape_vec((x.len(), width), flat).expect("row widths are fixed"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_one(col: &[f64]) -> PreprocessorState {
        let x: Vec<Vec<f64>> = col.iter().map(|&v| vec![v]).collect();
        PreprocessorState::fit(&x, &vec![0.0; col.len()], &[false]).unwrap()
    }

    #[test]
    fn symmetric_column_is_not_logged() {
        let s = fit_one(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(matches!(s.columns[0], ColumnTransform::Numeric { log1p: false, .. }));
    }

    #[test]
    fn heavy_tail_is_logged() {
        let mut col = vec![0.0; 50];
        col.push(1000.0);
        let s = fit_one(&col);
        assert!(matches!(s.columns[0], ColumnTransform::Numeric { log1p: true, .. }));
    }

    #[test]
    fn clipping_precedes_scaling() {
        let s = fit_one(&[0.0, 1.0, 2.0, 3.0]);
        let mut out = Vec::new();
        s.transform_row(&[1e12], &mut out).unwrap();
        let mut expect = Vec::new();
        s.transform_row(&[1e10], &mut expect).unwrap();
        assert_eq!(out, expect);
    }

    #[test]
    fn negative_minimum_scales_symmetrically() {
        let s = fit_one(&[-2.0, 0.0, 2.0]);
        let mut out = Vec::new();
        s.transform(&[vec![-2.0], vec![2.0]]).unwrap().iter().for_each(|v| out.push(*v));
        assert_eq!(out, vec![-1.0, 1.0]);
    }

    #[test]
    fn one_hot_columns() {
        let x = vec![vec![0.0, 5.0], vec![1.0, 6.0], vec![1.0, 7.0]];
        let s = PreprocessorState::fit(&x, &[0.0, 1.0, 2.0], &[true, false]).unwrap();
        assert_eq!(s.n_outputs(), 3);
        assert_eq!(s.output_sources(), vec![0, 0, 1]);
        let t = s.transform(&x).unwrap();
        assert_eq!(t.row(1).to_vec(), vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn target_round_trip() {
        let ys = [0.0, 1e-8, 0.3, 17.0, 1e10];
        let t = TargetTransform::fit(&ys);
        for y in ys {
            let back = t.inverse(t.forward(y));
            assert!((back - y).abs() <= 1e-9 * y.max(1.0), "{y} -> {back}");
        }
    }
}
