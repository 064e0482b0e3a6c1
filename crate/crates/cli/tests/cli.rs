mod common;

use std::fs;
use std::path::Path;

use common::*;
use earkd_cli::manifest::{sha256_file, RunManifest};
use earkd_core::dataset::NUM_STAGES;

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn subject_count(dir: &Path) -> usize {
    fs::read_dir(dir).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count()
}

#[test]
fn default_synth_writes_eight_subjects() {
    let dir = tmp();
    let out = dir.path().join("raw");
    ok(&["synth", "--out", s(&out), "--seed", "0"]);
    assert_eq!(subject_count(&out), 8);
    for id in ["S01", "S08"] {
        let sub = out.join(id);
        assert!(sub.join("scalp/manifest.json").is_file());
        assert!(sub.join("ear/manifest.json").is_file());
        assert_eq!(read(&sub.join("hypnogram.txt")).lines().count(), 200);
    }
    let manifest = RunManifest::load(&out.join("run_manifest.json")).unwrap();
    assert_eq!(manifest.command, "synth");
    assert_eq!(manifest.seed, Some(0));
    assert!(manifest.verify_outputs().unwrap());
}

#[test]
fn synth_is_reproducible_and_seeded() {
    let dir = tmp();
    let cfg = write(dir.path(), "synth.toml", SMALL_SYNTH);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&["synth", "--config", s(&cfg), "--out", s(&out), "--seed", seed]);
        RunManifest::load(&out.join("run_manifest.json")).unwrap().outputs
    };
    let hashes = |o: Vec<earkd_cli::manifest::FileHash>| o.into_iter().map(|f| f.sha256).collect::<Vec<_>>();
    let a = hashes(run("a", "4"));
    let b = hashes(run("b", "4"));
    let c = hashes(run("c", "5"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn seed_environment_variable_overrides_the_flag() {
    let dir = tmp();
    let cfg = write(dir.path(), "synth.toml", SMALL_SYNTH);
    let out = dir.path().join("raw");
    let res = earkd_env(
        &["synth", "--config", s(&cfg), "--out", s(&out), "--seed", "1"],
        &[("EARKD_SEED", "9")],
    );
    assert!(res.status.success());
    let manifest = RunManifest::load(&out.join("run_manifest.json")).unwrap();
    assert_eq!(manifest.seed, Some(9));
    let bad = earkd_env(&["synth", "--out", s(&out)], &[("EARKD_SEED", "nine")]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn missing_config_fails_with_io_code() {
    let dir = tmp();
    let res = earkd(&["synth", "--config", "/nonexistent/synth.toml", "--out", s(dir.path())]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("config file not found"), "{}", stderr(&res));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(earkd(&[]).status.code(), Some(2));
    assert_eq!(earkd(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(earkd(&["train", "--strategy", "x"]).status.code(), Some(2));
    assert_eq!(earkd(&["report", "--out", "r.md"]).status.code(), Some(2));
    assert_eq!(earkd(&["--help"]).status.code(), Some(0));
}

fn f32_file_scale(path: &Path, factor: f32) {
    let bytes = fs::read(path).unwrap();
    let scaled: Vec<u8> = bytes
        .chunks_exact(4)
        .flat_map(|c| (f32::from_le_bytes(c.try_into().unwrap()) * factor).to_le_bytes())
        .collect();
    fs::write(path, scaled).unwrap();
}

#[test]
fn preprocess_reports_rejections() {
    let dir = tmp();
    let cfg = write(dir.path(), "synth.toml", SMALL_SYNTH);
    let raw = dir.path().join("raw");
    ok(&["synth", "--config", s(&cfg), "--out", s(&raw), "--seed", "2"]);

    // S02: one electrode with 100x the power
    f32_file_scale(&raw.join("S02/ear/ELK.bin"), 10.0);
    // S03: right canal electrodes missing
    let manifest_path = raw.join("S03/ear/manifest.json");
    let mut m = json(&manifest_path);
    let ids: Vec<serde_json::Value> = m["channel_ids"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|v| !v.as_str().unwrap().starts_with("ERA") && !v.as_str().unwrap().starts_with("ERB"))
        .cloned()
        .collect();
    m["channel_ids"] = serde_json::Value::Array(ids);
    fs::write(&manifest_path, serde_json::to_string(&m).unwrap()).unwrap();

    let data = dir.path().join("data");
    ok(&["preprocess", "--in", s(&raw), "--out", s(&data)]);
    let clean = json(&data.join("S01/rejection_report.json"));
    assert_eq!(clean["rejected"].as_array().unwrap().len(), 0);
    let noisy = json(&data.join("S02/rejection_report.json"));
    assert_eq!(noisy["rejected"], serde_json::json!(["ELK"]));
    let summary = json(&data.join("preprocess_summary.json"));
    assert_eq!(summary["subjects"], serde_json::json!(["S01", "S02"]));
    assert_eq!(summary["rejected_recordings"][0]["subject"], "S03");
    assert!(!data.join("S03/hypnogram.txt").exists());

    let s1 = data.join("S01");
    let scalp = json(&s1.join("scalp/manifest.json"));
    assert_eq!(scalp["channel_ids"], serde_json::json!(["C3-O1", "C4-O2", "A1-A2"]));
    let ear = json(&s1.join("ear/manifest.json"));
    assert_eq!(ear["channel_ids"], serde_json::json!(["L-R", "LE", "RE"]));
}

#[test]
fn corrupt_container_fails_preprocessing() {
    let dir = tmp();
    let cfg = write(dir.path(), "synth.toml", SMALL_SYNTH);
    let raw = dir.path().join("raw");
    ok(&["synth", "--config", s(&cfg), "--out", s(&raw)]);
    let f = raw.join("S01/scalp/O1.bin");
    let bytes = fs::read(&f).unwrap();
    fs::write(&f, &bytes[..bytes.len() - 3]).unwrap();
    let res = earkd(&["preprocess", "--in", s(&raw), "--out", s(&dir.path().join("data"))]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("corrupt container"), "{}", stderr(&res));
}

#[test]
fn train_flag_errors() {
    let dir = tmp();
    let data = small_dataset(dir.path(), 0);
    let out = dir.path().join("t");
    let res = earkd(&["train", "--strategy", "distill", "--data", s(&data), "--fold", "0", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("unknown strategy"));
    let res = earkd(&["train", "--strategy", "kd-offline", "--data", s(&data), "--fold", "0", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("--teacher"), "{}", stderr(&res));
    let res = earkd(&["train", "--strategy", "supervised-ear", "--data", s(&data), "--fold", "3", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let res = earkd(&[
        "train", "--strategy", "supervised-ear", "--data", s(&data), "--fold", "0", "--out", s(&out),
        "--config", "/nonexistent.toml",
    ]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn training_is_reproducible_and_leaves_the_test_subject_out() {
    let dir = tmp();
    let data = small_dataset(dir.path(), 1);
    let cfg = write(dir.path(), "train.toml", SMALL_TRAIN);
    let run = |name: &str, fold: &str| {
        let out = dir.path().join(name);
        ok(&[
            "train", "--strategy", "kd-online", "--data", s(&data), "--fold", fold, "--config", s(&cfg),
            "--out", s(&out), "--seed", "3",
        ]);
        out
    };
    let a = run("a", "1");
    let b = run("b", "1");
    for f in ["model.ckpt", "teacher.ckpt", "loss.csv"] {
        assert_eq!(sha256_file(&a.join(f)).unwrap(), sha256_file(&b.join(f)).unwrap(), "{f}");
    }
    let m = RunManifest::load(&a.join("run_manifest.json")).unwrap();
    assert_eq!(m.config["test_subject"], "S02");
    assert_eq!(m.config["train_subjects"], serde_json::json!(["S01", "S03"]));
    assert_eq!(m.seed, Some(3));
    assert!(m.verify_outputs().unwrap());
    let loss = read(&a.join("loss.csv"));
    assert!(loss.starts_with("epoch,loss,teacher_loss\n"));
    assert_eq!(loss.lines().count(), 3);
}

#[test]
fn evaluate_writes_schema_conformant_metrics() {
    let dir = tmp();
    let data = small_dataset(dir.path(), 2);
    let cfg = write(dir.path(), "train.toml", SMALL_TRAIN);
    let model = dir.path().join("m");
    ok(&[
        "train", "--strategy", "supervised-ear", "--data", s(&data), "--fold", "2", "--config", s(&cfg),
        "--out", s(&model),
    ]);
    let ckpt = model.join("model.ckpt");
    let out = dir.path().join("e");
    ok(&["evaluate", "--checkpoint", s(&ckpt), "--data", s(&data), "--fold", "2", "--out", s(&out)]);

    let m = json(&out.join("metrics.json"));
    let obj = m.as_object().unwrap();
    let mut keys: Vec<&str> = obj.keys().map(|k| k.as_str()).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        ["accuracy", "confusion", "f1_per_class", "kappa", "kappa_degenerate", "macro_f1", "n_epochs"]
    );
    assert_eq!(m["n_epochs"], 12);
    let acc = m["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let f1 = m["f1_per_class"].as_array().unwrap();
    assert_eq!(f1.len(), NUM_STAGES);
    assert!(f1.iter().all(|v| v.is_null() || (0.0..=1.0).contains(&v.as_f64().unwrap())));
    let counts = m["confusion"]["counts"].as_array().unwrap();
    assert_eq!(counts.len(), NUM_STAGES);
    let total: u64 = counts.iter().flat_map(|r| r.as_array().unwrap()).map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 12);
    let trace: u64 = (0..NUM_STAGES).map(|i| counts[i][i].as_u64().unwrap()).sum();
    assert_eq!(acc, trace as f64 / 12.0);

    let confusion = read(&out.join("confusion.csv"));
    assert_eq!(confusion.lines().count(), 6);
    let features = read(&out.join("features.csv"));
    assert_eq!(features.lines().count(), 13);
    assert!(features.lines().nth(1).unwrap().contains(",ear,"));

    let missing = earkd(&[
        "evaluate", "--checkpoint", s(&ckpt), "--data", s(&dir.path().join("nope")), "--fold", "0",
        "--out", s(&out),
    ]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn evaluate_rejects_a_checkpoint_for_other_data() {
    let dir = tmp();
    let data = small_dataset(dir.path(), 0);
    let cfg = write(dir.path(), "synth.toml", "n_subjects = 2\nepochs_per_subject = 4\nsample_rate = 128.0\n");
    let raw = dir.path().join("raw128");
    let other = dir.path().join("data128");
    ok(&["synth", "--config", s(&cfg), "--out", s(&raw)]);
    ok(&["preprocess", "--in", s(&raw), "--out", s(&other)]);
    let train_cfg = write(dir.path(), "train.toml", SMALL_TRAIN);
    let model = dir.path().join("m");
    ok(&[
        "train", "--strategy", "supervised-scalp", "--data", s(&other), "--fold", "0", "--config",
        s(&train_cfg), "--out", s(&model),
    ]);
    let res = earkd(&[
        "evaluate", "--checkpoint", s(&model.join("model.ckpt")), "--data", s(&data), "--fold", "0",
        "--out", s(&dir.path().join("e")),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("checkpoint mismatch"), "{}", stderr(&res));
}

#[test]
fn report_over_all_strategies() {
    let dir = tmp();
    let data = small_dataset(dir.path(), 3);
    let runs = all_strategy_runs(dir.path(), &data);
    let mut args = vec!["report", "--runs"];
    let run_strs: Vec<&str> = runs.iter().map(|r| s(r)).collect();
    args.extend(&run_strs);
    let out = dir.path().join("report/table.md");
    let svg = dir.path().join("report/features.svg");
    args.extend(["--out", s(&out), "--svg", s(&svg)]);
    ok(&args);

    let table = read(&out);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "| Architecture | Modality | Method | ACC | κ |");
    assert_eq!(lines.len(), 2 + 5);
    assert!(lines[2].starts_with("| CNN | Scalp-EEG | Supervised |"));
    assert!(lines[3].starts_with("| CNN | Ear-EEG | Supervised |"));
    assert!(lines[4].starts_with("| CNN | Ear-EEG | Transfer learning |"));
    assert!(lines[5].starts_with("| CNN | Ear-EEG | Offline KD |"));
    assert!(lines[6].starts_with("| CNN | Ear-EEG | Online KD |"));
    let csv = read(&out.with_extension("csv"));
    assert_eq!(csv.lines().count(), 6);

    let n_features: usize = runs.iter().map(|r| read(&r.join("features.csv")).lines().count() - 1).sum();
    assert_eq!(read(&svg).matches("<circle").count(), n_features);
    assert_eq!(read(&svg.with_extension("csv")).lines().count(), n_features + 1);

    let first = (fs::read(&out).unwrap(), fs::read(&svg).unwrap());
    ok(&args);
    assert_eq!(first, (fs::read(&out).unwrap(), fs::read(&svg).unwrap()));
    assert!(dir.path().join("report/table.manifest.json").is_file());
}
