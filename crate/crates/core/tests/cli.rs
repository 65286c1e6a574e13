//! End-to-end checks of the command-line tool: outputs, exit codes and
//! reproducibility.

mod common;

use std::fs;

use common::{exit_code, ok, snapshot, tiny_config, write_config};
use serde_json::{json, Value};
use tempfile::TempDir;

fn workdir() -> TempDir {
    tempfile::tempdir().unwrap()
}

/// Sets the value at a JSON pointer, creating the last key if needed.
fn with(mut cfg: Value, pointer: &str, value: Value) -> Value {
    let (parent, key) = pointer.rsplit_once('/').unwrap();
    let parent = cfg.pointer_mut(parent).unwrap_or_else(|| panic!("{pointer}"));
    match parent {
        Value::Array(items) => items[key.parse::<usize>().unwrap()] = value,
        other => other[key] = value,
    }
    cfg
}

#[test]
fn gen_data_writes_a_reproducible_manifest() {
    let dir = workdir();
    write_config(dir.path(), "run.json", &tiny_config());
    let table = ok(dir.path(), &["gen-data", "--config", "run.json", "--out", "a"]);
    assert!(table.contains("rolling_pin") && table.contains("ball"), "{table}");
    let manifest: Value = serde_json::from_slice(&fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["pairs"][0]["episodes"], 3);
    ok(dir.path(), &["gen-data", "--config", "run.json", "--out", "b"]);
    assert_eq!(snapshot(&dir.path().join("a")), snapshot(&dir.path().join("b")));
    // A different seed explores differently.
    ok(dir.path(), &["gen-data", "--config", "run.json", "--out", "c", "--seed", "6"]);
    assert_ne!(snapshot(&dir.path().join("a")), snapshot(&dir.path().join("c")));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = workdir();
    let d = dir.path();
    let bad_pair = with(tiny_config(), "/exploration/pairs/0/shape", json!("two_balls"));
    write_config(d, "pair.json", &bad_pair);
    assert_eq!(exit_code(d, &["gen-data", "--config", "pair.json", "--out", "ds"]), 2);
    assert!(!d.join("ds").exists());

    write_config(d, "typo.json", &with(tiny_config(), "/training/epsiodes", json!(3)));
    assert_eq!(exit_code(d, &["gen-data", "--config", "typo.json", "--out", "ds"]), 2);

    let wrong_tool = with(tiny_config(), "/tool", json!("knife"));
    write_config(d, "tool.json", &wrong_tool);
    assert_eq!(exit_code(d, &["train", "--config", "tool.json", "--out", "runs"]), 2);

    assert_eq!(exit_code(d, &["gen-data", "--config", "missing.json", "--out", "ds"]), 2);
    // No output directory anywhere.
    write_config(d, "run.json", &tiny_config());
    assert_eq!(exit_code(d, &["train", "--config", "run.json"]), 2);
}

#[test]
fn pretrain_writes_one_loss_row_per_epoch() {
    let dir = workdir();
    let d = dir.path();
    write_config(d, "run.json", &tiny_config());
    ok(d, &["gen-data", "--config", "run.json", "--out", "ds"]);
    ok(d, &["pretrain", "--config", "run.json", "--dataset", "ds", "--out", "pre"]);
    let loss = fs::read_to_string(d.join("pre/loss.csv")).unwrap();
    assert_eq!(loss.lines().next(), Some("epoch,loss"));
    assert_eq!(loss.lines().count(), 1 + 2);
    assert!(d.join("pre/softgpt.ckpt").exists() && d.join("pre/encoder.ckpt").exists());

    // Zero epochs keeps the initial weights and an empty curve.
    write_config(d, "zero.json", &with(tiny_config(), "/pretrain/epochs", json!(0)));
    ok(d, &["pretrain", "--config", "zero.json", "--dataset", "ds", "--out", "zero"]);
    assert_eq!(fs::read_to_string(d.join("zero/loss.csv")).unwrap(), "epoch,loss\n");
    ok(d, &["pretrain", "--config", "zero.json", "--dataset", "ds", "--out", "zero2"]);
    assert_eq!(fs::read(d.join("zero/softgpt.ckpt")).unwrap(), fs::read(d.join("zero2/softgpt.ckpt")).unwrap());
    assert_ne!(fs::read(d.join("zero/softgpt.ckpt")).unwrap(), fs::read(d.join("pre/softgpt.ckpt")).unwrap());
}

#[test]
fn empty_dataset_exits_with_3() {
    let dir = workdir();
    let d = dir.path();
    write_config(d, "empty.json", &with(tiny_config(), "/exploration/pairs/0/episodes", json!(0)));
    ok(d, &["gen-data", "--config", "empty.json", "--out", "ds"]);
    assert_eq!(exit_code(d, &["pretrain", "--config", "empty.json", "--dataset", "ds", "--out", "pre"]), 3);
}

#[test]
fn train_writes_one_csv_per_seed_and_resumes() {
    let dir = workdir();
    let d = dir.path();
    write_config(d, "run.json", &tiny_config());
    let out = ok(d, &["train", "--config", "run.json", "--out", "runs"]);
    assert_eq!(out.lines().count(), 2, "{out}");
    let csvs: Vec<String> =
        ["rolling_sac_seed1.csv", "rolling_sac_seed2.csv"].iter().map(|n| fs::read_to_string(d.join("runs").join(n)).unwrap()).collect();
    for csv in &csvs {
        let episodes: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(episodes, ["0", "1", "2"]);
    }
    assert_ne!(csvs[0], csvs[1]);

    // Raising the budget and resuming appends episodes 3 and 4.
    write_config(d, "more.json", &with(tiny_config(), "/training/episodes", json!(5)));
    ok(d, &["train", "--config", "more.json", "--out", "runs", "--resume", "--seed", "1"]);
    let resumed = fs::read_to_string(d.join("runs/rolling_sac_seed1.csv")).unwrap();
    let episodes: Vec<&str> = resumed.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(episodes, ["0", "1", "2", "3", "4"]);
    assert!(resumed.starts_with(&csvs[0]));
    // Seed 2 was left alone.
    assert_eq!(fs::read_to_string(d.join("runs/rolling_sac_seed2.csv")).unwrap(), csvs[1]);

    // Resuming under a different configuration is refused.
    write_config(d, "other.json", &with(tiny_config(), "/training/update_every", json!(3)));
    assert_eq!(exit_code(d, &["train", "--config", "other.json", "--out", "runs", "--resume", "--seed", "1"]), 2);
}

#[test]
fn softgpt_variants_need_a_checkpoint() {
    let dir = workdir();
    let d = dir.path();
    write_config(d, "full.json", &with(tiny_config(), "/variant", json!("softgpt_full")));
    assert_eq!(exit_code(d, &["train", "--config", "full.json", "--out", "runs"]), 2);
}

#[test]
fn eval_reports_statistics_and_checks_the_tool() {
    let dir = workdir();
    let d = dir.path();
    write_config(d, "one.json", &with(with(tiny_config(), "/eval_episodes", json!(1)), "/seeds", json!([1])));
    ok(d, &["train", "--config", "one.json", "--out", "runs"]);
    ok(d, &["eval", "--config", "one.json", "--checkpoint", "runs/rolling_sac_seed1", "--out", "ev"]);
    let report: Value = serde_json::from_slice(&fs::read(d.join("ev/eval.json")).unwrap()).unwrap();
    assert_eq!(report["episodes"], 1);
    assert!(report["iou"]["std"].is_null());
    assert!(report["iou"]["mean"].is_f64());
    // One initial frame plus one per policy step.
    let frames: Value = serde_json::from_slice(&fs::read(d.join("ev/frames/episode_000/manifest.json")).unwrap()).unwrap();
    assert_eq!(frames["frames"], 3);

    write_config(d, "two.json", &with(tiny_config(), "/seeds", json!([1])));
    ok(d, &["eval", "--config", "two.json", "--checkpoint", "runs/rolling_sac_seed1", "--out", "ev2"]);
    let report: Value = serde_json::from_slice(&fs::read(d.join("ev2/eval.json")).unwrap()).unwrap();
    assert!(report["reward"]["std"].as_f64().unwrap() >= 0.0);

    write_config(d, "knife.json", &with(tiny_config(), "/task", json!("cutting")));
    assert_eq!(exit_code(d, &["eval", "--config", "knife.json", "--checkpoint", "runs/rolling_sac_seed1", "--out", "ev3"]), 4);
}

#[test]
fn plot_needs_metrics_files() {
    let dir = workdir();
    let d = dir.path();
    fs::create_dir(d.join("empty")).unwrap();
    fs::write(d.join("empty/notes.csv"), "a,b\n1,2\n").unwrap();
    assert_eq!(exit_code(d, &["plot", "empty"]), 5);

    write_config(d, "run.json", &with(tiny_config(), "/seeds", json!([1])));
    ok(d, &["train", "--config", "run.json", "--out", "runs"]);
    ok(d, &["plot", "runs", "--out", "a"]);
    ok(d, &["plot", "runs", "--out", "b"]);
    let svg = fs::read_to_string(d.join("a/rolling.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.contains(">sac</text>"));
    assert_eq!(snapshot(&d.join("a")), snapshot(&d.join("b")));
}

#[test]
fn help_lists_every_command() {
    let dir = workdir();
    let help = ok(dir.path(), &["--help"]);
    for verb in ["gen-data", "pretrain", "train", "eval", "plot"] {
        assert!(help.contains(verb), "{verb}");
    }
}
