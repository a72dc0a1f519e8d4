mod common;

use clap::Parser;

use common::{bin, build_tiny, tiny_model};
use opesel::cli::{run, Cli};
use opesel_core::bandit::io::{save_task, TaskManifest};
use opesel_core::bandit::TaskGenerator;
use opesel_core::meta_model::{read_file, save};

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(run(["opesel", "select", "--no-such-flag"]), 2);
    let out = bin().args(["train", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_required_flag_is_named() {
    let err = Cli::try_parse_from(["opesel", "select", "--task", "t"]).unwrap_err();
    assert!(err.to_string().contains("--model"), "{err}");
    let out = bin().args(["select", "--task", "t"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model"));
}

#[test]
fn runtime_failure_exits_one() {
    let out = bin().args(["select", "--model", "/nonexistent/model.bin", "--task", "/nonexistent"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn generate_train_select_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let meta = d.join("meta.csv");
    let out = bin()
        .args(["generate", "--n-tasks", "8", "--n-gen", "2", "--n-gt", "2000", "--max-actions", "4"])
        .args(["--min-rounds", "60", "--max-rounds", "120", "--max-dim", "3", "--workers", "1"])
        .arg("--out")
        .arg(&meta)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!read_file(&meta).unwrap().records.is_empty());

    let model = d.join("model.bin");
    let out = bin()
        .args(["train", "--budget", "2", "--test-fraction", "0.25", "--val-fraction", "0.25", "--meta"])
        .arg(&meta)
        .arg("--out")
        .arg(&model)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.exists());
    let search: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("model.bin.search.json")).unwrap()).unwrap();
    assert_eq!(search["search"]["trials"].as_array().map(Vec::len), Some(2), "{search}");

    let task_dir = d.join("task");
    let params = opesel::builder::BuildConfig { space: common::tiny_space(), seed: 99 }.task_params(0);
    let task = TaskGenerator::new(params).unwrap().logging_task(0).unwrap();
    save_task(&task_dir, &task, &TaskManifest::for_task(&task), None).unwrap();
    let out = bin().arg("select").arg("--model").arg(&model).arg("--task").arg(&task_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("selected: "));
    assert_eq!(lines.count(), 1 + 21);

    let out = bin().arg("importance").arg("--model").arg(&model).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 43);
}

#[test]
fn convert_writes_a_task_with_its_value() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("iris.csv");
    let mut csv = String::from("a,b,label\n");
    for i in 0..90 {
        let c = i % 3;
        csv.push_str(&format!("{},{},{c}\n", c as f64 * 4.0 + (i % 5) as f64 * 0.1, (i % 7) as f64 * 0.1));
    }
    std::fs::write(&data, csv).unwrap();
    let task = dir.path().join("task");
    let out = bin()
        .args(["convert", "--alpha-b", "0", "--alpha-e", "1", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&task)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("45 logging rounds, 3 actions"), "{text}");
    let stored = opesel_core::bandit::io::load_task(&task).unwrap();
    assert_eq!(stored.reward_matrix.unwrap().dim(), (45, 3));
}

#[test]
fn saved_model_loads_in_select() {
    let dir = tempfile::tempdir().unwrap();
    let meta = dir.path().join("m.csv");
    build_tiny(&meta, 6, 1, 5);
    let model = tiny_model(&read_file(&meta).unwrap().records);
    let path = dir.path().join("model.bin");
    save(&model, &path).unwrap();
    let loaded = opesel_core::meta_model::load(&path).unwrap();
    let x = read_file(&meta).unwrap().records[0].features.clone();
    assert_eq!(model.predict(&x).unwrap().to_bits(), loaded.predict(&x).unwrap().to_bits());
}
