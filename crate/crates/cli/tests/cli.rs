use std::path::Path;
use std::process::Command;

fn hrw(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_hrw")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "hrw {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_then_segment_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let phantom = dir.path().join("phantom");
    hrw(&["synth", "--scenario", "sphere", "--dims", "32", "--sigma", "0", "--brick-side", "16", "-o", s(&phantom)]);
    for f in ["volume.hrov", "labels.json", "manifest.json", "ground_truth.raw", "ground_truth.raw.json"] {
        assert!(phantom.join(f).exists(), "{f}");
    }

    let seg = dir.path().join("seg");
    let cfg = dir.path().join("engine.json");
    std::fs::write(&cfg, r#"{"weight": {"kind": "grady", "beta": 50.0}, "worker_count": 1}"#).unwrap();
    hrw(&[
        "segment",
        "--volume",
        s(&phantom.join("volume.hrov")),
        "--labels",
        s(&phantom.join("labels.json")),
        "--config",
        s(&cfg),
        "--weight",
        "gaussian_global",
        "-o",
        s(&seg),
    ]);
    assert!(seg.join("probability-c0.hrov").exists());
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(seg.join("run.json")).unwrap()).unwrap();
    assert_eq!(stats.as_array().unwrap().len(), 1);

    let report = dir.path().join("report.json");
    let out = hrw(&[
        "eval", "--scenario", "sphere", "--dims", "32", "--sigma", "0", "--brick-side", "16", "--weight", "gaussian_global",
        "-o", s(&report),
    ]);
    let r: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(r["dice"].as_f64().unwrap() > 0.9, "{r}");
    assert!(report.exists());
}

#[test]
fn build_converts_raw_volumes() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("v.raw");
    std::fs::write(&raw, vec![7u8; 40 * 40 * 40]).unwrap();
    std::fs::write(dir.path().join("v.raw.json"), r#"{"dims": [40, 40, 40], "dtype": "u8"}"#).unwrap();
    let out = hrw(&["build", s(&raw), "-o", s(&dir.path().join("v.hrov")), "--brick-side", "16"]);
    assert!(out.contains("3 levels"), "{out}");
}

#[test]
fn surface_bricks_csv() {
    let out = hrw(&["surface-bricks", "--n", "1,4"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "n,bricks,surface_bricks,bricks_per_n2");
    assert!(lines[1].starts_with("1,1,1,"));
    assert_eq!(lines.len(), 3);
}

#[test]
fn bench_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    hrw(&[
        "bench", "--scenarios", "cells", "--seeds", "0", "--dims", "32", "--structure-size", "0.3", "--fg-fraction", "0.05",
        "--brick-sides", "16", "--workers", "1", "-o", s(dir.path()),
    ]);
    let csv = std::fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("scenario,seed,setting,dice"));
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("cells,0,none/s16,"));
    let md = std::fs::read_to_string(dir.path().join("ablation.md")).unwrap();
    assert!(md.contains("| hom+dt/s16 |"));
}
