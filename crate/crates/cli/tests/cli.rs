use std::process::{Command, Output};

use serde_json::Value;

fn sg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sg"))
        .args(args)
        .env_remove("SG_MAX_LEVEL")
        .output()
        .unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(sg(&["--help"]).status.code(), Some(0));
    let o = sg(&["spectrum", "--alpah", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--alpha"));
    assert_eq!(sg(&["det", "--case", "half-half"]).status.code(), Some(2));
    assert_eq!(
        sg(&["kit", "--alpha", "1/0", "--beta", "0", "--lambda", "1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn spectrum_both_methods_agree() {
    let v = json(&sg(&[
        "spectrum", "--alpha", "1/2", "--beta", "1/2", "--level", "2", "--method", "both",
    ]));
    assert_eq!(v["match"]["matched"], Value::Bool(true));
    let total: u64 = v["dense"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["multiplicity"].as_u64().unwrap())
        .sum();
    assert_eq!(total, 15);
    let v = json(&sg(&["spectrum", "--alpha", "0.1", "--beta", "0.2", "--level", "1"]));
    assert!(v["closed_form"].is_null());
    assert_eq!(
        sg(&[
            "spectrum",
            "--alpha",
            "0.1",
            "--beta",
            "0.2",
            "--level",
            "1",
            "--method",
            "closed-form"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn level_guard_follows_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_sg"))
        .args(["graph-export", "--level", "2"])
        .env("SG_MAX_LEVEL", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let v = json(&sg(&["graph-export", "--level", "1", "--alpha", "1/4", "--beta", "0"]));
    assert_eq!(v["vertices"].as_array().unwrap().len(), 6);
    assert_eq!(v["edges"].as_array().unwrap().len(), 9);
    assert_eq!(v["connection"].as_object().unwrap().len(), 9);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = sg(&[
        "verify",
        "--alpha",
        "0.3",
        "--beta",
        "0.1",
        "--level",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["all_pass"], Value::Bool(true));
    assert!(dir.path().join("report.json.manifest.json").exists());
    // on the line 3α + β = 1/2 the value 1 + cos(2πα)/2 is reported, not asserted
    let v = json(&sg(&["verify", "--alpha", "1/8", "--beta", "1/8", "--level", "2"]));
    let lam = 1.0 + (std::f64::consts::TAU / 8.0).cos() / 2.0;
    let e = v["exceptional"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| (e["lambda"].as_f64().unwrap() - lam).abs() < 1e-9)
        .unwrap();
    assert_eq!(e["status"], Value::String("informational".into()));
    assert_eq!(e["multiplicity"], Value::from(3));
}

#[test]
fn kit_det_complexity() {
    let v = json(&sg(&["kit", "--alpha", "0.25", "--beta", "0.25", "--lambda", "0.3"]));
    assert!(v["kit"]["r"].is_number());
    let v = json(&sg(&["det", "--case", "trees", "--level", "1"]));
    assert_eq!(v["integer"], Value::String("54".into()));
    let v = json(&sg(&["complexity", "--case", "zero-zero"]));
    assert!((v["value"].as_f64().unwrap() - 1.04859).abs() < 1e-5);
    let v = json(&sg(&["det", "--case", "zero-half", "--level", "3"]));
    assert!(v["log_value"].as_f64().unwrap() < 0.0);
}

#[test]
fn butterfly_files_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    for (p, t) in [(&a, "1"), (&b, "3")] {
        let o = sg(&[
            "--threads",
            t,
            "butterfly",
            "--map",
            "U",
            "--grid",
            "61",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert!(bytes.starts_with(b"P5\n61 61\n"));
    let manifest: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.pgm.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], Value::String("butterfly".into()));
}

#[test]
fn crsf_subcommands() {
    let v = json(&sg(&[
        "crsf",
        "partition",
        "--level",
        "1",
        "--alpha",
        "1/2",
        "--beta",
        "1/2",
    ]));
    assert!((v["partition"]["re"].as_f64().unwrap() - 25.0 / 64.0).abs() < 1e-12);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.jsonl");
    let o = sg(&[
        "crsf",
        "sample",
        "--level",
        "1",
        "--alpha",
        "0.05",
        "--beta",
        "0.05",
        "--samples",
        "5",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 5);
    for line in text.lines() {
        let s: Value = serde_json::from_str(line).unwrap();
        assert_eq!(s["successor"].as_array().unwrap().len(), 6);
    }
    assert_eq!(
        sg(&["crsf", "sample", "--level", "1", "--alpha", "0", "--beta", "0"])
            .status
            .code(),
        Some(2)
    );
}
