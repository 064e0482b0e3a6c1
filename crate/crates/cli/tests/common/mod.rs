#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SMALL_SYNTH: &str = "n_subjects = 3\nepochs_per_subject = 12\n";
pub const SMALL_TRAIN: &str = "[model]\nfeature_dim = 16\nwidths = [8, 8]\n\n[train]\nepochs = 2\nbatch_size = 8\n";

pub fn earkd(args: &[&str]) -> Output {
    earkd_env(args, &[])
}

pub fn earkd_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_earkd"));
    cmd.args(args).env_remove("EARKD_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn ok(args: &[&str]) -> Output {
    let out = earkd(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Synthesises and preprocesses a small dataset under `root`; returns the
/// preprocessed directory.
pub fn small_dataset(root: &Path, seed: u64) -> PathBuf {
    let cfg = write(root, "synth.toml", SMALL_SYNTH);
    let raw = root.join("raw");
    let data = root.join("data");
    ok(&["synth", "--config", s(&cfg), "--out", s(&raw), "--seed", &seed.to_string()]);
    ok(&["preprocess", "--in", s(&raw), "--out", s(&data)]);
    data
}

/// Trains and evaluates every strategy on fold 0; returns the evaluation
/// run directories in strategy order.
pub fn all_strategy_runs(root: &Path, data: &Path) -> Vec<PathBuf> {
    let cfg = write(root, "train.toml", SMALL_TRAIN);
    let train = |strategy: &str, extra: &[&str]| {
        let out = root.join("train").join(strategy);
        let mut args = vec![
            "train", "--strategy", strategy, "--data", s(data), "--fold", "0", "--config", s(&cfg),
            "--out", s(&out),
        ];
        args.extend_from_slice(extra);
        ok(&args);
        out
    };
    let scalp = train("supervised-scalp", &[]);
    let teacher = scalp.join("model.ckpt");
    let mut runs = Vec::new();
    for (strategy, dir) in [
        ("supervised-scalp", scalp.clone()),
        ("supervised-ear", train("supervised-ear", &[])),
        ("transfer", train("transfer", &[])),
        ("kd-offline", train("kd-offline", &["--teacher", s(&teacher)])),
        ("kd-online", train("kd-online", &[])),
    ] {
        let eval = root.join("eval").join(strategy);
        ok(&[
            "evaluate", "--checkpoint", s(&dir.join("model.ckpt")), "--data", s(data), "--fold", "0",
            "--out", s(&eval),
        ]);
        runs.push(eval);
    }
    runs
}

pub fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

pub fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&read(p)).unwrap()
}
