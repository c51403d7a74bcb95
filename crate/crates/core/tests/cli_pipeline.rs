//! End-to-end runs of the `hhmo` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL_GRID: [&str; 8] = [
    "--dx", "0.01", "--dt", "4e-5", "--t-max", "0.13", "--stride", "50",
];

fn hhmo(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hhmo"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("HHMO_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = hhmo(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn constants_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = ok(dir.path(), &["constants"]);
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    let file = json(&dir.path().join("constants.json"));
    assert_eq!(printed, file);
    let a_star = file["alpha_star"].as_f64().unwrap();
    assert!((a_star - 1.232179).abs() < 1e-6, "{a_star}");
    for key in [
        "psi_alpha",
        "t_star",
        "L",
        "C_psi",
        "c_psi",
        "C_ell",
        "T1",
        "T2",
        "T_unique",
    ] {
        assert!(file[key].is_number(), "missing {key}");
    }
    assert_eq!(
        json(&dir.path().join("constants_report.json"))["schema_version"],
        1
    );
}

#[test]
fn simulate_then_analyze_and_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    let record = dir.path().join("rec");
    let rec = record.to_str().unwrap();
    let mut args = vec!["simulate", "--record", rec];
    args.extend(SMALL_GRID);
    ok(dir.path(), &args);
    for f in ["u.csv", "w.csv", "p.csv", "acc.csv", "record.json"] {
        assert!(record.join(f).is_file(), "missing {f}");
    }
    ok(dir.path(), &["analyze", "--record", rec]);
    let front = json(&dir.path().join("front_report.json"));
    assert_eq!(front["command"], "analyze");
    assert!(front["report"]["ell"]
        .as_array()
        .unwrap()
        .iter()
        .any(Value::is_number));

    ok(dir.path(), &["diagnose", "--record", rec]);
    assert!(dir.path().join("probes.csv").is_file());
    assert!(json(&dir.path().join("diagnostics.json"))["report"].is_object());
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("rec");
    let rec = rec.to_str().unwrap();
    let mut args = vec!["simulate", "--record", rec];
    args.extend(SMALL_GRID);
    let mut first = Vec::new();
    for _ in 0..2 {
        ok(dir.path(), &args);
        ok(dir.path(), &["analyze", "--record", rec]);
        let bytes: Vec<Vec<u8>> = [
            "rec/record.json",
            "rec/u.csv",
            "simulate.json",
            "front_report.json",
        ]
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
        .collect();
        if first.is_empty() {
            first = bytes;
        } else {
            assert!(first == bytes, "second run differs");
        }
    }
}

#[test]
fn toy_linear_forcing_is_not_unique() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["toy", "--forcing", "linear"]);
    let table = &json(&dir.path().join("toy.json"))["report"];
    assert_eq!(table["verdict"], "non_unique");
    let feasible = |pu: bool, pv: bool| {
        table["rows"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| {
                r["policy"]["pu_switches_at_zero"] == pu && r["policy"]["pv_switches_at_zero"] == pv
            })
            .unwrap()["feasibility"]["feasible"]
            .as_bool()
            .unwrap()
    };
    assert!(feasible(true, false));
    assert!(feasible(false, true));
    assert!(!feasible(false, false));

    ok(dir.path(), &["toy", "--forcing", "constant"]);
    assert_eq!(
        json(&dir.path().join("toy.json"))["report"]["verdict"],
        "unique"
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        hhmo(dir.path(), &["no-such-command"]).status.code(),
        Some(1)
    );
    assert_eq!(
        hhmo(dir.path(), &["constants", "--alpha", "-1"])
            .status
            .code(),
        Some(1)
    );
    let missing = dir.path().join("absent");
    assert_eq!(
        hhmo(
            dir.path(),
            &["analyze", "--record", missing.to_str().unwrap()]
        )
        .status
        .code(),
        Some(1)
    );
    assert_eq!(hhmo(dir.path(), &["--help"]).status.code(), Some(0));
}
