//! Command-line behavior: exit codes, config precedence, stamps, locking,
//! and stage isolation.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mddx() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mddx"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn small_config(out_dir: &Path) -> String {
    format!(
        r#"seed = 7
out_dir = "{}"

[cohort]
n = 120
mode = "separable"

[sft]
epochs = 5
lr = 0.3
batch_size = 16

[grpo]
lr = 1.0
updates = 3
rollout_temperature = 0.8

[eval]
n_eval = 60
"#,
        out_dir.display()
    )
}

fn run_ok(config: &Path, args: &[&str]) -> Output {
    let out = mddx().arg("--config").arg(config).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "mddx {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn synth_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(&out_dir));
    run_ok(&config, &["synth"]);
    for name in [
        "cohort.csv",
        "kept.csv",
        "excluded.csv",
        "qa.jsonl",
        "cohort_summary.json",
        "data_dictionary.json",
        "stamp_synth.json",
    ] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
}

#[test]
fn invalid_prevalence_fails_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(&out_dir));
    let out = mddx()
        .arg("--config")
        .arg(&config)
        .args(["synth", "--prevalence", "1.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("cohort.prevalence"), "{stderr}");
}

#[test]
fn unknown_config_key_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[cohort]\nn = 150\ntypo_key = 1\n");
    let out = mddx().arg("--config").arg(&config).arg("synth").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("typo_key"), "{stderr}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = mddx().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(&out_dir));
    run_ok(&config, &["synth"]);
    let first = std::fs::read(out_dir.join("qa.jsonl")).unwrap();
    let first_cohort = std::fs::read(out_dir.join("cohort.csv")).unwrap();
    run_ok(&config, &["synth"]);
    assert_eq!(first, std::fs::read(out_dir.join("qa.jsonl")).unwrap());
    assert_eq!(first_cohort, std::fs::read(out_dir.join("cohort.csv")).unwrap());
}

#[test]
fn eval_without_upstream_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(&out_dir));
    let out = mddx().arg("--config").arg(&config).arg("eval").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("synth"), "{stderr}");
}

#[test]
fn train_rl_flag_overrides_are_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(&out_dir));
    run_ok(&config, &["synth"]);
    run_ok(&config, &["reason"]);
    run_ok(&config, &["train-sft"]);
    run_ok(
        &config,
        &["train-rl", "--beta", "0.25", "--epsilon", "0.15", "--updates", "2"],
    );
    let stamp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("stamp_train_rl.json")).unwrap())
            .unwrap();
    let grpo = &stamp["effective_config"]["grpo"];
    assert_eq!(grpo["kl_beta"], 0.25);
    assert_eq!(grpo["clip_eps"], 0.15);
    assert_eq!(grpo["updates"], 2);
}

#[test]
fn config_precedence_flag_beats_file_beats_default() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    // file sets seed and sft.epochs; defaults give grpo.group_size = 8
    let config = write_config(dir.path(), &small_config(&out_dir));
    run_ok(&config, &["--seed", "99", "synth"]);
    let stamp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("stamp_synth.json")).unwrap())
            .unwrap();
    let effective = &stamp["effective_config"];
    assert_eq!(effective["seed"], 99, "flag beats file (file had 7)");
    assert_eq!(effective["sft"]["epochs"], 5, "file beats default (default 3)");
    assert_eq!(effective["grpo"]["group_size"], 8, "built-in default");
}

#[test]
fn lock_file_blocks_concurrent_writers() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(&out_dir));
    std::fs::create_dir_all(&out_dir).unwrap();
    std::fs::write(out_dir.join(".mddx.lock"), "held\n").unwrap();
    let out = mddx().arg("--config").arg(&config).arg("synth").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("lock") || stderr.contains(".mddx.lock"), "{stderr}");
    // releasing the lock unblocks
    std::fs::remove_file(out_dir.join(".mddx.lock")).unwrap();
    run_ok(&config, &["synth"]);
}

#[test]
fn deleting_downstream_artifacts_leaves_upstream_intact() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(&out_dir));
    run_ok(&config, &["synth"]);
    run_ok(&config, &["reason"]);
    run_ok(&config, &["train-sft"]);
    let qa_before = std::fs::read(out_dir.join("qa.jsonl")).unwrap();
    let corpus_before = std::fs::read(out_dir.join("corpus.jsonl")).unwrap();
    std::fs::remove_file(out_dir.join("sft.ckpt")).unwrap();
    std::fs::remove_file(out_dir.join("sft_loss.csv")).unwrap();
    // upstream untouched, and the stage can simply be rerun
    assert_eq!(qa_before, std::fs::read(out_dir.join("qa.jsonl")).unwrap());
    assert_eq!(corpus_before, std::fs::read(out_dir.join("corpus.jsonl")).unwrap());
    run_ok(&config, &["train-sft"]);
    assert!(out_dir.join("sft.ckpt").exists());
}

#[test]
fn standalone_filter_works_on_existing_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(&out_dir));
    run_ok(&config, &["synth"]);
    run_ok(&config, &["filter", "--threshold", "0.5"]);
    assert!(out_dir.join("stamp_filter.json").exists());
}
