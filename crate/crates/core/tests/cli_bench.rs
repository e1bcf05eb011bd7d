//! Timing comparison in its own binary so no other test competes for the CPU.

use std::path::Path;
use std::process::{Command, Output};

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = Command::new(env!("CARGO_BIN_EXE_weedpilot"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("spawn weedpilot");
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn folded_bench_is_not_slower() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--per-class", "5"]);
    ok(d, &["split"]);
    ok(d, &["train", "--epochs", "0"]);
    ok(d, &["optimize", d.join("ckpt.wpck").to_str().unwrap()]);
    ok(
        d,
        &[
            "bench",
            d.join("ckpt.wpck").to_str().unwrap(),
            d.join("optimized.wpck").to_str().unwrap(),
            "--frames",
            "30",
        ],
    );
    let bench: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("bench.json")).unwrap()).unwrap();
    let mean = |i: usize| bench[i]["report"]["latency_ms"]["mean"].as_f64().unwrap();
    assert_eq!(bench[0]["folded"], false);
    assert_eq!(bench[1]["folded"], true);
    assert!(mean(1) <= mean(0), "folded {} ms vs unfolded {} ms", mean(1), mean(0));
}
