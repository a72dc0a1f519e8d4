#![allow(dead_code)]

use std::path::Path;

use opesel::builder::{build_meta_dataset, BuildConfig};
use opesel_core::bandit::GeneratorSpace;
use opesel_core::meta_model::{train_with_search, FeatureMask, MseRecord, TrainedMetaModel};

/// A generator space small enough for a task to take milliseconds.
pub fn tiny_space() -> GeneratorSpace {
    GeneratorSpace {
        n_actions: (2, 4),
        n_rounds: (60, 120),
        dim_context: (1, 3),
        n_gen: 2,
        n_gt: 2000,
        ..GeneratorSpace::default()
    }
}

pub fn build_tiny(path: &Path, n_tasks: u64, workers: usize, seed: u64) {
    let config = BuildConfig { space: tiny_space(), seed };
    build_meta_dataset(&config, n_tasks, workers, path, |_, _| {}).unwrap();
}

pub fn tiny_model(records: &[MseRecord]) -> TrainedMetaModel {
    let half = records.len() / 2;
    let split = records[half].task_id;
    let (fit, val): (Vec<_>, Vec<_>) = records.iter().cloned().partition(|r| r.task_id < split);
    train_with_search(&fit, &val, 2, FeatureMask::default(), 0).unwrap()
}

pub fn bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_opesel"))
}
