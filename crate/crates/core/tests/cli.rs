use std::path::Path;
use std::process::{Command, Output};

use weedpilot::deploy::Checkpoint;
use weedpilot::train::TrainLog;

fn weedpilot(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weedpilot"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env("WEEDPILOT_DETERMINISTIC", "1")
        .output()
        .expect("spawn weedpilot")
}

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = weedpilot(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

#[test]
fn usage_and_operational_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = weedpilot(dir.path(), &["split", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = weedpilot(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));

    // no manifest yet
    let o = weedpilot(dir.path(), &["split"]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");
    assert!(err["error"]["message"].as_str().unwrap().contains("manifest.jsonl"));
}

#[test]
fn split_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--per-class", "10", "--seed", "1"]);
    ok(d, &["split", "--seed", "7", "--k", "5"]);
    let first = std::fs::read(d.join("split.jsonl")).unwrap();
    ok(d, &["split", "--seed", "7", "--k", "5"]);
    assert_eq!(first, std::fs::read(d.join("split.jsonl")).unwrap());
    ok(d, &["split", "--seed", "8", "--k", "5"]);
    assert_ne!(first, std::fs::read(d.join("split.jsonl")).unwrap());

    let cfg: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("split_config.json")).unwrap()).unwrap();
    assert_eq!(cfg["seed"], 8);
    assert_eq!(cfg["settings"]["k"], 5);
}

#[test]
fn zero_epoch_workflow_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--per-class", "5"]);
    ok(d, &["split", "--k", "5"]);
    ok(d, &["train", "--epochs", "0"]);
    let ck = Checkpoint::load(&d.join("ckpt.wpck")).unwrap();
    assert_eq!(ck.meta.epoch, 0);
    let log = TrainLog::from_csv(&std::fs::read_to_string(d.join("train_log.csv")).unwrap()).unwrap();
    assert!(log.records.is_empty());

    ok(d, &["eval"]);
    let eval: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["samples"], 16);
    assert!(eval["latency_ms"].is_null());
    assert!(d.join("f1.csv").exists() && d.join("confusion.csv").exists());

    ok(d, &["export"]);
    ok(d, &["optimize"]);
    let folded = Checkpoint::load(&d.join("optimized.wpck")).unwrap();
    assert!(folded.meta.folded);
    assert!(folded.graph.parameter_count() < ck.graph.parameter_count());

    ok(d, &["simulate", "--oracle", "--length", "5"]);
    let sim: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("sim_report.json")).unwrap()).unwrap();
    assert_eq!(sim["false_sprays"], 0);
    assert_eq!(sim["weeds_missed"], 0);
    assert!(std::fs::read_to_string(d.join("sim_events.csv"))
        .unwrap()
        .starts_with("t,ground_truth,prediction,sprayed"));
    ok(d, &["simulate", "--length", "3"]);
}

#[test]
fn config_file_and_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("images");
    ok(
        d,
        &["gen-data", "--per-class", "3", "--width", "64", "--height", "48", "--write-png", "--data-dir", data.to_str().unwrap()],
    );
    std::fs::write(data.join("vm").join("broken.png"), b"not a png").unwrap();
    ok(d, &["ingest", "--data-dir", data.to_str().unwrap()]);
    let manifest = std::fs::read_to_string(d.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 48);
    let skipped = std::fs::read_to_string(d.join("ingest_skipped.json")).unwrap();
    assert!(skipped.contains("broken.png"));

    let cfg = d.join("run.toml");
    std::fs::write(&cfg, "seed = 11\nk = 3\n").unwrap();
    ok(d, &["split", "--config", cfg.to_str().unwrap()]);
    let echoed: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("split_config.json")).unwrap()).unwrap();
    assert_eq!(echoed["seed"], 11);
    assert_eq!(echoed["settings"]["k"], 3);

    std::fs::write(&cfg, "sede = 11\n").unwrap();
    let o = weedpilot(d, &["split", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
