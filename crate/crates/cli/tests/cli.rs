//! End-to-end tests of the binary: exit codes, artifact layout, overrides,
//! and byte-level reproducibility through the CLI surface.

use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_clusterfed");

const DESK_CONFIG: &str = "\
[data]
n_clusters_true = 2
clients_per_cluster = 3
samples_per_client = 40
n_features = 6
n_classes = 3
cluster_separation = 3

[sgd]
learning_rate = 0.05
momentum = 0
local_steps = 5
batch_size = 16

[strategy]
kind = wecfl
k_clusters = 2

[run]
rounds = 3
report_window = 2
";

const NCLASS_CONFIG: &str = "\
[data]
n_clusters_true = 5
clients_per_cluster = 2
samples_per_client = 100
n_features = 6
n_classes = 10
partitioner = nclass
partition_clients = 10
partition_clusters = 5
cluster_classes = 3
client_classes = 2

[run]
rounds = 1
report_window = 1
";

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("experiment.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn run_happy_path_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DESK_CONFIG);
    let out = dir.path().join("results");
    let output = run_cli(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    for file in [
        "summary.json",
        "rounds.jsonl",
        "assignments.jsonl",
        "client_params.csv",
        "cosine_clusters.csv",
        "cosine_clients.csv",
        "effective_config.txt",
    ] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rounds_run"], 3);
    // The input config is echoed, not mutated.
    assert_eq!(std::fs::read_to_string(&config).unwrap(), DESK_CONFIG);
}

#[test]
fn missing_config_exits_one_naming_the_path() {
    let output = run_cli(&["run", "--config", "/nonexistent/path.cfg"]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("/nonexistent/path.cfg"), "{stderr}");
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let output = run_cli(&["run", "--no-such-flag"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(!output.stderr.is_empty());
}

#[test]
fn bad_override_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DESK_CONFIG);
    let output = run_cli(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "--override",
        "strategy.no_such_key=1",
    ]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn overrides_apply_before_validation() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DESK_CONFIG);
    let out = dir.path().join("o");
    let output = run_cli(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--override",
        "run.rounds=2",
        "--seed-train",
        "77",
        "--quiet",
    ]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let effective = std::fs::read_to_string(out.join("effective_config.txt")).unwrap();
    assert!(effective.contains("rounds = 2"));
    assert!(effective.contains("seed_train = 77"));
}

#[test]
fn check_theorems_violation_exits_three_with_round() {
    let dir = tempfile::tempdir().unwrap();
    // Clamp disabled plus an absurd learning rate: the local step must
    // eventually raise F.
    let config = write_config(
        dir.path(),
        &format!("{DESK_CONFIG}eta_clamp = none\n"),
    );
    let output = run_cli(&[
        "check-theorems",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "--override",
        "sgd.learning_rate=50",
        "--quiet",
    ]);
    assert_eq!(output.status.code(), Some(3), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("round"), "{stderr}");
}

#[test]
fn check_theorems_passes_on_clamped_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DESK_CONFIG);
    let output = run_cli(&[
        "check-theorems",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("theorem checks passed"), "{stdout}");
}

#[test]
fn partition_stats_nclass_label_budget_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), NCLASS_CONFIG);
    let out1 = dir.path().join("s1");
    let out2 = dir.path().join("s2");
    for out in [&out1, &out2] {
        let output = run_cli(&[
            "partition-stats",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--quiet",
        ]);
        assert_eq!(output.status.code(), Some(0), "{output:?}");
    }
    let csv1 = std::fs::read(out1.join("partition_stats.csv")).unwrap();
    let csv2 = std::fs::read(out2.join("partition_stats.csv")).unwrap();
    assert_eq!(csv1, csv2, "partition stats must be byte-identical");

    // Every client row shows exactly 2 nonzero class counts in the
    // (3, 2)-class setting.
    let text = String::from_utf8(csv1).unwrap();
    for line in text.lines().skip(1).filter(|l| l.starts_with("client_")) {
        let nonzero = line
            .split(',')
            .skip(3)
            .filter(|cell| cell.parse::<usize>().unwrap() > 0)
            .count();
        assert_eq!(nonzero, 2, "bad row: {line}");
    }
}

#[test]
fn sweep_writes_per_value_directories() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DESK_CONFIG);
    let out = dir.path().join("sweep");
    let output = run_cli(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--axis",
        "strategy.k_clusters",
        "--values",
        "1,2",
        "--quiet",
    ]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    assert!(out.join("sweep_1").join("summary.json").exists());
    assert!(out.join("sweep_2").join("summary.json").exists());
    let index: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep_summary.json")).unwrap())
            .unwrap();
    assert_eq!(index.as_array().unwrap().len(), 2);
}

#[test]
fn rounds_jsonl_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DESK_CONFIG);
    let out1 = dir.path().join("r1");
    let out2 = dir.path().join("r2");
    for out in [&out1, &out2] {
        let output = run_cli(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--quiet",
        ]);
        assert_eq!(output.status.code(), Some(0));
    }
    let a = std::fs::read(out1.join("rounds.jsonl")).unwrap();
    let b = std::fs::read(out2.join("rounds.jsonl")).unwrap();
    assert_eq!(a, b);
}
