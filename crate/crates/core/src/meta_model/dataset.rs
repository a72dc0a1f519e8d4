//! Meta-dataset records and their CSV representation.
//!
//! Layout: one `# opesel meta-dataset; feature-schema: N` line, a column
//! header, then one line per record. Other `#` lines are comments; the
//! builder uses them to mark tasks it skipped. Floats are written with 17
//! significant digits so files round-trip exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::EstimatorSpec;
use crate::features::{FEATURE_NAMES, FEATURE_SCHEMA_VERSION, N_FEATURES};
use crate::rng::{stream, TAG_SPLIT};

pub const SCHEMA_PREFIX: &str = "# opesel meta-dataset; feature-schema: ";
pub const SKIP_PREFIX: &str = "# skipped task ";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("meta-dataset has feature schema {found}, this build uses {expected}")]
    Schema { found: u32, expected: u32 },
    #[error("meta-dataset line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRecord {
    pub task_id: u64,
    pub realization: u32,
    pub estimator: EstimatorSpec,
    pub features: Vec<f64>,
    pub mse: f64,
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn header_lines() -> String {
    let mut s = format!("{SCHEMA_PREFIX}{FEATURE_SCHEMA_VERSION}\ntask_id,realization,estimator");
    for name in FEATURE_NAMES {
        s.push(',');
        s.push_str(name);
    }
    s.push_str(",mse\n");
    s
}

pub fn format_record(r: &MseRecord) -> String {
    let mut s = format!("{},{},{}", r.task_id, r.realization, r.estimator.id());
    for &v in &r.features {
        s.push(',');
        s.push_str(&format_float(v));
    }
    s.push(',');
    s.push_str(&format_float(r.mse));
    s.push('\n');
    s
}

/// Comment line recording a task the builder did not keep.
pub fn skip_line(task_id: u64, reason: &str) -> String {
    let reason: String = reason.chars().map(|c| if c == '\n' || c == '\r' { ' ' } else { c }).collect();
    format!("{SKIP_PREFIX}{task_id}: {reason}\n")
}

pub fn write_records<W: Write>(mut w: W, records: &[MseRecord]) -> Result<(), DatasetError> {
    w.write_all(header_lines().as_bytes())?;
    for r in records {
        w.write_all(format_record(r).as_bytes())?;
    }
    Ok(())
}

fn parse_record(line: &str, line_no: usize) -> Result<MseRecord, DatasetError> {
    let err = |message: String| DatasetError::Parse { line: line_no, message };
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != N_FEATURES + 4 {
        return Err(err(format!("expected {} fields, got {}", N_FEATURES + 4, fields.len())));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| err(format!("bad number {s:?}: {e}")));
    let task_id = fields[0].parse().map_err(|e| err(format!("bad task id: {e}")))?;
    let realization = fields[1].parse().map_err(|e| err(format!("bad realization: {e}")))?;
    let estimator = EstimatorSpec::from_id(fields[2]).ok_or_else(|| err(format!("unknown estimator {}", fields[2])))?;
    let features = fields[3..3 + N_FEATURES].iter().map(|s| num(s)).collect::<Result<_, _>>()?;
    let mse = num(fields[3 + N_FEATURES])?;
    Ok(MseRecord { task_id, realization, estimator, features, mse })
}

/// Parsed meta-dataset contents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetaDataset {
    pub records: Vec<MseRecord>,
    pub skipped: BTreeSet<u64>,
}

impl MetaDataset {
    /// Task ids with at least one record or a skip marker.
    pub fn completed_tasks(&self) -> BTreeSet<u64> {
        self.records.iter().map(|r| r.task_id).chain(self.skipped.iter().copied()).collect()
    }
}

pub fn read_records<R: BufRead>(reader: R) -> Result<MetaDataset, DatasetError> {
    let mut out = MetaDataset::default();
    let mut saw_schema = false;
    let mut saw_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if let Some(v) = line.strip_prefix(SCHEMA_PREFIX) {
            let found: u32 = v
                .trim()
                .parse()
                .map_err(|e| DatasetError::Parse { line: line_no, message: format!("bad schema version: {e}") })?;
            if found != FEATURE_SCHEMA_VERSION {
                return Err(DatasetError::Schema { found, expected: FEATURE_SCHEMA_VERSION });
            }
            saw_schema = true;
        } else if let Some(v) = line.strip_prefix(SKIP_PREFIX) {
            let id = v
                .split(':')
                .next()
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| DatasetError::Parse { line: line_no, message: format!("bad task id: {e}") })?;
            out.skipped.insert(id);
        } else if line.starts_with('#') || line.trim().is_empty() {
        } else if !saw_header {
            if !saw_schema {
                return Err(DatasetError::Parse { line: line_no, message: "missing schema line".into() });
            }
            saw_header = true;
        } else {
            out.records.push(parse_record(&line, line_no)?);
        }
    }
    Ok(out)
}

pub fn read_file(path: &std::path::Path) -> Result<MetaDataset, DatasetError> {
    read_records(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Records grouped by (task id, realization), in order of first appearance.
pub fn group_instances(records: &[MseRecord]) -> Vec<Vec<&MseRecord>> {
    let mut index: BTreeMap<(u64, u32), usize> = BTreeMap::new();
    let mut groups: Vec<Vec<&MseRecord>> = Vec::new();
    for r in records {
        let slot = *index.entry((r.task_id, r.realization)).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push(r);
    }
    groups
}

/// Train/validation/test split that keeps all realizations of a task in one
/// part. `fractions` are the train and validation shares; the rest is test.
pub fn split_by_task(
    records: &[MseRecord],
    fractions: (f64, f64),
    seed: u64,
) -> (Vec<MseRecord>, Vec<MseRecord>, Vec<MseRecord>) {
    let mut ids: Vec<u64> = records.iter().map(|r| r.task_id).collect::<BTreeSet<_>>().into_iter().collect();
    ids.shuffle(&mut stream(seed, &[TAG_SPLIT]));
    let n = ids.len() as f64;
    let n_train = (fractions.0 * n).round() as usize;
    let n_val = ((fractions.0 + fractions.1) * n).round() as usize - n_train;
    let part: BTreeMap<u64, u8> = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, if i < n_train { 0 } else if i < n_train + n_val { 1 } else { 2 }))
        .collect();
    let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
    for r in records {
        match part[&r.task_id] {
            0 => a.push(r.clone()),
            1 => b.push(r.clone()),
            _ => c.push(r.clone()),
        }
    }
    (a, b, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::enumerate_candidates;

    fn record(task_id: u64, realization: u32, k: usize) -> MseRecord {
        let features = (0..N_FEATURES).map(|i| (i as f64 + 0.1) / 3.0 * (k as f64 + 1.0)).collect();
        MseRecord { task_id, realization, estimator: enumerate_candidates()[k], features, mse: 1.0 / 7.0 }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let recs: Vec<_> = (0..5).map(|k| record(k as u64, 0, k)).collect();
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back.records, recs);
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = format!("{SCHEMA_PREFIX}0\n");
        assert!(matches!(read_records(text.as_bytes()), Err(DatasetError::Schema { found: 0, expected: 1 })));
    }

    #[test]
    fn split_keeps_tasks_together() {
        let recs: Vec<_> = (0..50u64).flat_map(|t| (0..3).map(move |r| record(t, r, 0))).collect();
        let (a, b, c) = split_by_task(&recs, (0.6, 0.2), 9);
        assert_eq!(a.len() + b.len() + c.len(), recs.len());
        let ids = |v: &[MseRecord]| v.iter().map(|r| r.task_id).collect::<BTreeSet<_>>();
        assert!(ids(&a).is_disjoint(&ids(&b)) && ids(&a).is_disjoint(&ids(&c)) && ids(&b).is_disjoint(&ids(&c)));
        assert_eq!(ids(&a).len(), 30);
    }
}
