use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const CONFIG: &str = r#"
seed = 5
output_dir = "run"

[dataset]
kind = "synthetic"
class_count = 3
per_class = 60
image_shape = [4, 4, 3]
separation = 1.5
seed = 17

[architecture]
input_shape = [4, 4, 3]
dense_width = 16
class_count = 3

[[architecture.conv_blocks]]
pool = 2
convs = [{ filters = 4, kernel = 3 }, { filters = 4, kernel = 3 }]

[train]
batch_size = 16
epochs = 40

[redaction]
k = 3
max_steps = 10

[ensemble]
split_count = 1
base_seed = 8
"#;

fn unlearn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unlearn"))
        .current_dir(dir)
        .args(["--config", "exp.toml", "--workers", "1"])
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn setup() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    let run = dir.path().join("run");
    (dir, run)
}

fn trained(with_ensemble: bool) -> (TempDir, PathBuf) {
    let (dir, run) = setup();
    let out = unlearn(dir.path(), &["train"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let args: &[&str] = if with_ensemble { &["attack", "--ensemble"] } else { &["attack"] };
    let out = unlearn(dir.path(), args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    (dir, run)
}

fn member_and_nonmember(run: &Path) -> (usize, usize) {
    let plan: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("target.plan.json")).unwrap()).unwrap();
    let first = |key: &str| plan[key][0].as_u64().unwrap() as usize;
    (first("member_indices"), first("nonmember_indices"))
}

#[test]
fn rerun_writes_identical_training_artifacts() {
    let (dir, run) = setup();
    assert_eq!(code(&unlearn(dir.path(), &["train"])), 0);
    let first: Vec<Vec<u8>> = ["target.ckpt", "target.history.json", "target.plan.json"]
        .iter()
        .map(|f| fs::read(run.join(f)).unwrap())
        .collect();
    let again = dir.path().join("again");
    assert_eq!(code(&unlearn(dir.path(), &["train", "--out", again.to_str().unwrap()])), 0);
    for (name, bytes) in ["target.ckpt", "target.history.json", "target.plan.json"].iter().zip(first) {
        assert_eq!(fs::read(again.join(name)).unwrap(), bytes, "{name} differs");
    }
}

#[test]
fn missing_dataset_path_is_named() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("exp.toml"),
        "[dataset]\nkind = \"cifar10\"\npath = \"no-such-cifar\"\n",
    )
    .unwrap();
    let out = unlearn(dir.path(), &["train"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no-such-cifar"), "{}", stderr(&out));
}

#[test]
fn missing_config_and_artifacts_are_named() {
    let dir = TempDir::new().unwrap();
    let out = unlearn(dir.path(), &["train"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("exp.toml"));

    let (dir, _) = setup();
    let out = unlearn(dir.path(), &["redact", "--points", "1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("target.ckpt"), "{}", stderr(&out));
}

#[test]
fn redact_handles_empty_unknown_and_nonmember_points() {
    let (dir, run) = trained(false);
    let out = unlearn(dir.path(), &["redact", "--points", ""]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(!run.join("redacted.ckpt").exists());

    let (_, nonmember) = member_and_nonmember(&run);
    let out = unlearn(dir.path(), &["redact", "--points", &nonmember.to_string()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("not a member"), "{}", stderr(&out));

    let out = unlearn(dir.path(), &["redact", "--points", "999999"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("999999"));
}

#[test]
fn redact_top_points_writes_one_outcome_each_and_sets_exit_status() {
    let (dir, run) = trained(false);
    let out = unlearn(dir.path(), &["redact", "--points", "top:4", "--recover-epochs", "1"]);
    let lines: Vec<serde_json::Value> = fs::read_to_string(run.join("outcomes.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    let all_ok = lines.iter().all(|o| o["success"].as_bool().unwrap());
    assert_eq!(code(&out), if all_ok { 0 } else { 2 }, "{}", stderr(&out));
    assert!(run.join("redacted.ckpt").is_file());
    assert!(run.join("recovered.ckpt").is_file());
    assert!(run.join("recovery.json").is_file());
}

#[test]
fn sweep_emits_one_row_per_k() {
    let (dir, run) = trained(false);
    let out = unlearn(dir.path(), &["sweep", "--k", "0,1,5,10", "--per-class", "1"]);
    assert!(matches!(code(&out), 0 | 2), "{}", stderr(&out));
    let csv = fs::read_to_string(run.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0], "k,mean_mi_score,mean_accuracy,mean_steps");
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 4));
}

#[test]
fn evaluate_needs_ensemble_and_reruns_identically() {
    let (dir, run) = trained(false);
    let out = unlearn(dir.path(), &["evaluate", "--points", "top:2"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("ensemble.json"), "{}", stderr(&out));

    fs::write(run.join("ensemble.json"), "[]").unwrap();
    let out = unlearn(dir.path(), &["evaluate", "--points", "top:2"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no attack models"), "{}", stderr(&out));

    let (dir, run) = trained(true);
    let first = unlearn(dir.path(), &["evaluate", "--points", "top:2"]);
    assert!(matches!(code(&first), 0 | 2), "{}", stderr(&first));
    let report = fs::read(run.join("report.json")).unwrap();
    let csv = fs::read_to_string(run.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    let again = unlearn(dir.path(), &["--workers", "2", "evaluate", "--points", "top:2"]);
    assert_eq!(code(&again), code(&first));
    assert_eq!(fs::read(run.join("report.json")).unwrap(), report);
}

#[test]
fn timing_writes_both_methods() {
    let (dir, run) = trained(false);
    let out = unlearn(dir.path(), &["timing", "--points", "top:1"]);
    assert!(matches!(code(&out), 0 | 2), "{}", stderr(&out));
    let csv = fs::read_to_string(run.join("timing.csv")).unwrap();
    assert!(csv.contains("\nRemove,") && csv.contains("\nRedact,"));
}

#[test]
fn default_config_round_trips_through_a_file() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_unlearn")).arg("default-config").output().unwrap();
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("batch_size = 128"));
    fs::write(dir.path().join("exp.toml"), text).unwrap();
    let out = unlearn(dir.path(), &["sweep"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("cifar-10-batches-bin"), "{}", stderr(&out));
}
