//! End-to-end tests of the `blocksearch` binary: flags, exit codes, and the
//! artifacts each subcommand leaves behind.

use blocksearch::archgraph::MacroConfig;
use blocksearch::blockspace::SearchSpace;
use blocksearch::datasets::{DataSource, DatasetProfile, SynthSpec};
use blocksearch::manifest::RunManifest;
use blocksearch::search::SearchConfig;
use blocksearch::trainer::TrainConfig;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_blocksearch"));
    cmd.env_remove("BLOCKSEARCH_OUT_ROOT");
    cmd
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn write_manifest(dir: &Path, trials: usize) -> std::path::PathBuf {
    let dataset = DatasetProfile {
        source: DataSource::Synthetic(SynthSpec {
            classes: 2,
            size: 8,
            per_class: 30,
            difficulty: 0.1,
            seed: 4,
        }),
        val_size: 0,
        split_seed: 0,
        augment_crop: true,
        augment_flip: true,
    };
    let search = SearchConfig {
        trials,
        top_k: 2,
        space: SearchSpace::default(),
        macro_config: MacroConfig::new(1, 1, 8, (8, 8, 3), 2).unwrap(),
        train: TrainConfig {
            max_epochs: 2,
            early_stop_patience_epochs: 2,
            batch_size: 16,
            lr_initial: 0.05,
            ..TrainConfig::default()
        },
        master_seed: 5,
        parallelism: 2,
    };
    let manifest = RunManifest::new(search, dataset, dir.join("out"));
    let path = dir.join("manifest.json");
    manifest.save(&path).unwrap();
    path
}

#[test]
fn sample_is_deterministic_and_prints_one_config_per_line() {
    let run = || {
        let out = bin().args(["sample", "-n", "4", "--seed", "7"]).output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        stdout(&out)
    };
    let first = run();
    let second = run();
    assert_eq!(first, second, "identical seed must give identical output");
    assert_eq!(first.lines().count(), 4);
    for line in first.lines() {
        line.parse::<blocksearch::blockspace::BlockConfig>().unwrap();
    }
}

#[test]
fn describe_prints_the_reported_block_with_totals() {
    let out = bin()
        .args(["describe", "--config", "conv(5)|sp_conv(1)|sp_conv(3)|rc_conv(3)+add_det"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("total params 2083498"), "{text}");
    assert!(text.contains("total macs"), "{text}");
    assert!(text.contains("head.softmax"), "{text}");
}

#[test]
fn describe_honors_macro_overrides() {
    let out = bin()
        .args([
            "describe",
            "--config",
            "conv(3)+add_det",
            "--macro",
            "stages=1,n=1,filters=16,input=16x16x3,classes=5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("dense 16->5"), "{}", stdout(&out));
}

#[test]
fn bad_config_exits_with_data_code_and_one_line_diagnostic() {
    let out = bin().args(["describe", "--config", "conv(7)+add_det"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("7"), "{err}");
}

#[test]
fn usage_errors_exit_with_code_one() {
    let out = bin().args(["describe", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn train_writes_metrics_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = bin()
        .args([
            "train",
            "--config",
            "conv(3)|sp_conv(3)+add_det",
            "--dataset",
            "synthetic:classes=2,size=8,per_class=30,difficulty=0.1,seed=2",
            "--macro",
            "stages=1,n=1,filters=8",
            "--train",
            "epochs=3,patience=3,batch=16,lr=0.05",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("best_val_acc"), "{text}");
    assert!(text.contains("test_acc"), "{text}");
    assert!(out_dir.join("metrics.csv").exists());
    assert!(out_dir.join("checkpoint.ckpt").exists());
}

#[test]
fn train_without_out_needs_the_env_root() {
    let no_env = bin()
        .args([
            "train",
            "--config",
            "conv(1)+add_det",
            "--dataset",
            "synthetic:classes=2,size=8,per_class=30",
        ])
        .output()
        .unwrap();
    assert_eq!(no_env.status.code(), Some(2), "{}", stderr(&no_env));
    assert!(stderr(&no_env).contains("BLOCKSEARCH_OUT_ROOT"));

    let dir = tempfile::tempdir().unwrap();
    let with_env = bin()
        .env("BLOCKSEARCH_OUT_ROOT", dir.path())
        .args([
            "train",
            "--config",
            "conv(1)+add_det",
            "--dataset",
            "synthetic:classes=2,size=8,per_class=30,difficulty=0.1,seed=2",
            "--macro",
            "stages=1,n=1,filters=8",
            "--train",
            "epochs=2,patience=2,batch=16,lr=0.05",
        ])
        .output()
        .unwrap();
    assert!(with_env.status.success(), "{}", stderr(&with_env));
    assert!(dir.path().join("train").join("checkpoint.ckpt").exists());
}

#[test]
fn search_ensemble_analyze_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = write_manifest(dir.path(), 3);
    let run_dir = dir.path().join("out");

    let search = bin()
        .args(["search", "--manifest", manifest_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(search.status.success(), "{}", stderr(&search));
    assert!(stdout(&search).contains("search complete: 3 trials"));
    assert!(run_dir.join("trials.log").exists());
    assert!(run_dir.join("curve.csv").exists());
    assert!(run_dir.join("manifest").exists());
    let curve = std::fs::read_to_string(run_dir.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4, "{curve}");
    assert!(curve.starts_with("trial_index,best_val_acc"));

    // Re-running without --resume refuses; with --resume it is a no-op.
    let again = bin()
        .args(["search", "--manifest", manifest_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(again.status.code(), Some(2), "{}", stderr(&again));
    let resumed = bin()
        .args(["search", "--manifest", manifest_path.to_str().unwrap(), "--resume"])
        .output()
        .unwrap();
    assert!(resumed.status.success(), "{}", stderr(&resumed));

    let ensemble = bin()
        .args(["ensemble", "--run-dir", run_dir.to_str().unwrap(), "--top-k", "2"])
        .output()
        .unwrap();
    assert!(ensemble.status.success(), "{}", stderr(&ensemble));
    let text = stdout(&ensemble);
    assert!(text.contains("single"), "{text}");
    assert!(text.contains("ensemble"), "{text}");
    assert!(run_dir.join("ensemble.json").exists());

    let analyze = bin()
        .args(["analyze", "--run-dir", run_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(analyze.status.success(), "{}", stderr(&analyze));
    assert!(stdout(&analyze).starts_with("component,count_all,count_top,expected_top"));
    let csv = std::fs::read_to_string(run_dir.join("components.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13, "9 ops + 3 combiners + header: {csv}");
}

#[test]
fn ensemble_on_a_missing_run_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["ensemble", "--run-dir", dir.path().join("nope").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn search_jobs_override_keeps_results_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("a")).unwrap();
    std::fs::create_dir_all(dir.path().join("b")).unwrap();
    let m1 = write_manifest(&dir.path().join("a"), 2);
    let m2 = write_manifest(&dir.path().join("b"), 2);

    let r1 = bin().args(["search", "--manifest", m1.to_str().unwrap(), "--jobs", "1"]).output().unwrap();
    let r2 = bin().args(["search", "--manifest", m2.to_str().unwrap(), "--jobs", "4"]).output().unwrap();
    assert!(r1.status.success() && r2.status.success());
    let c1 = std::fs::read_to_string(dir.path().join("a").join("out").join("curve.csv")).unwrap();
    let c2 = std::fs::read_to_string(dir.path().join("b").join("out").join("curve.csv")).unwrap();
    assert_eq!(c1, c2, "jobs flag must not change results");
}
