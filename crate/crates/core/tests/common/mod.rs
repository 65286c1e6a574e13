//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

/// A configuration small enough that every command finishes in seconds.
pub fn tiny_config() -> Value {
    json!({
        "seeds": [1, 2],
        "eval_episodes": 2,
        "exploration": {
            "pairs": [{"tool": "rolling_pin", "shape": "ball", "episodes": 3}],
            "steps_per_episode": 3,
            "seed": 5,
            "agent": {"hidden": 16, "batch": 4, "buffer_capacity": 64},
            "update_every": 2,
            "updates_per_event": 1,
            "sim": {"lattice_spacing": 0.035, "substeps": 4}
        },
        "pretrain": {"epochs": 2, "batch": 4},
        "softgpt": {"layers": 1, "heads": 2, "hidden": 8, "context": 8},
        "training": {
            "episodes": 3,
            "steps_per_episode": 2,
            "update_every": 2,
            "gpt_update_every": 4,
            "updates_per_event": 1,
            "agent": {"hidden": 16, "batch": 4, "buffer_capacity": 64, "think": {"horizon": 2}},
            "finetune": {"epochs": 1, "batch": 4},
            "sim": {"lattice_spacing": 0.035, "substeps": 4}
        }
    })
}

pub fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

/// Runs the binary with `dir` as working directory.
pub fn softworld(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softworld")).args(args).current_dir(dir).env("RUST_LOG", "error").output().expect("binary runs")
}

/// Runs a command that must succeed and returns its stdout.
pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = softworld(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn exit_code(dir: &Path, args: &[&str]) -> i32 {
    softworld(dir, args).status.code().expect("exited normally")
}

/// Every file under `root` by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// gen-data, pretrain, train, eval and plot with the tiny configuration,
/// every path relative to `dir`.
pub fn full_pipeline(dir: &Path, variant: &str) {
    let mut cfg = tiny_config();
    cfg["variant"] = json!(variant);
    write_config(dir, "run.json", &cfg);
    ok(dir, &["gen-data", "--config", "run.json", "--out", "ds"]);
    ok(dir, &["pretrain", "--config", "run.json", "--dataset", "ds", "--out", "pre"]);
    ok(dir, &["train", "--config", "run.json", "--checkpoint", "pre", "--out", "runs"]);
    let run = format!("runs/rolling_{variant}_seed1");
    ok(dir, &["eval", "--config", "run.json", "--checkpoint", &run, "--out", "ev"]);
    ok(dir, &["plot", "runs", "--out", "plots"]);
}
