mod common;

use std::path::Path;

use common::{build_tiny, tiny_model};
use opesel::presets::*;
use opesel_core::meta_model::{read_file, save};

fn csv_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

fn setup(dir: &Path, n_tasks: u64) -> (std::path::PathBuf, std::path::PathBuf) {
    let meta = dir.join("meta.csv");
    build_tiny(&meta, n_tasks, 1, 3);
    let model_path = dir.join("model.bin");
    save(&tiny_model(&read_file(&meta).unwrap().records), &model_path).unwrap();
    (meta, model_path)
}

#[test]
fn logging_preset_reports_every_realization() {
    let dir = tempfile::tempdir().unwrap();
    let (_, model) = setup(dir.path(), 6);
    let mut config = ExperimentConfig::new("logging1", dir.path().join("out"));
    config.model = Some(model);
    config.n_data = 5;
    config.n_rounds = 150;
    config.n_gt = 2000;
    let out = run_experiment_preset(&config).unwrap();
    let per_task = dir.path().join("out/logging1/per_task.csv");
    assert!(out.files.contains(&per_task));
    assert_eq!(csv_rows(&per_task), 21 * 5);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/logging1/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_reports"], 105);
}

#[test]
fn presets_without_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::new("logging2", dir.path().to_path_buf());
    let err = run_experiment_preset(&config).unwrap_err();
    assert!(err.to_string().contains("--model"), "{err}");
    let config = ExperimentConfig::new("scaling", dir.path().to_path_buf());
    assert!(run_experiment_preset(&config).unwrap_err().to_string().contains("--meta"));
}

#[test]
fn scaling_and_feature_ablation() {
    let dir = tempfile::tempdir().unwrap();
    let (meta, _) = setup(dir.path(), 16);
    let mut config = ExperimentConfig::new("scaling", dir.path().join("out"));
    config.meta = Some(meta.clone());
    config.sizes = vec![8, 12, 16];
    config.budget = 2;
    config.test_fraction = 0.25;
    run_experiment_preset(&config).unwrap();
    let scaling = dir.path().join("out/scaling/scaling.csv");
    assert_eq!(csv_rows(&scaling), 3);

    config.preset = "ablation-features".into();
    run_experiment_preset(&config).unwrap();
    let ablation = std::fs::read_to_string(dir.path().join("out/ablation-features/ablation.csv")).unwrap();
    let names: Vec<&str> = ablation.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["estimator-only", "policy-independent", "policy-dependent", "all"]);
}
