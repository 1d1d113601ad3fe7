use std::path::Path;
use std::process::{Command, Output};

fn temlm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_temlm"))
        .args(args)
        .env_remove("TEMLM_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fixture_bundle(dir: &Path, defect: Option<&str>) {
    let out = dir.to_str().unwrap();
    let mut args = vec!["--out", out, "--seed", "7", "fixture", "--bundle", "--patients", "60"];
    if let Some(d) = defect {
        args.extend(["--defect", d]);
    }
    let o = temlm(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gate_exit_codes_follow_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let golden = tmp.path().join("golden");
    let dirty = tmp.path().join("dirty");
    fixture_bundle(&golden, None);
    fixture_bundle(&dirty, Some("patient-overlap"));

    let o = temlm(&["gate", golden.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("gate: PASS"));

    let o = temlm(&["gate", dirty.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("[FAIL] patient_split"));

    let o = temlm(&["--format", "json", "gate", golden.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "pass");
}

#[test]
fn verify_exit_codes_follow_consistency() {
    let tmp = tempfile::tempdir().unwrap();
    let golden = tmp.path().join("golden");
    let stale = tmp.path().join("stale");
    fixture_bundle(&golden, None);
    fixture_bundle(&stale, Some("stale-provenance"));
    assert_eq!(code(&temlm(&["verify", golden.to_str().unwrap()])), 0);
    let o = temlm(&["verify", stale.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("preprocess-config"));
}

#[test]
fn leak_dat_output_has_threshold_header() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_eq!(code(&temlm(&["--out", dir, "fixture", "--patients", "40"])), 0);
    let corpus = tmp.path().join("corpus.jsonl");
    let split = tmp.path().join("split.json");
    let o = temlm(&[
        "--format",
        "dat",
        "leak",
        "--corpus",
        corpus.to_str().unwrap(),
        "--split",
        split.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "threshold pct");
    assert_eq!(&lines[1..], ["0.30 0.00", "0.50 0.00", "0.70 0.00", "0.85 0.00"]);
}

#[test]
fn drift_dat_output_has_year_header() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_eq!(code(&temlm(&["--out", dir, "fixture", "--patients", "40"])), 0);
    let corpus = tmp.path().join("corpus.jsonl");
    let o = temlm(&["--format", "dat", "drift", "--corpus", corpus.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().next(), Some("year psi"));
}

#[test]
fn usage_and_io_errors_exit_two() {
    assert_eq!(code(&temlm(&["bogus"])), 2);
    assert_eq!(code(&temlm(&["gate"])), 2);
    assert_eq!(code(&temlm(&["gate", "/nonexistent/bundle"])), 2);
    assert_eq!(code(&temlm(&["validate", "/nonexistent/doc.json"])), 2);
}

#[test]
fn validate_flags_incomplete_docs() {
    let tmp = tempfile::tempdir().unwrap();
    let b = tmp.path().join("b");
    fixture_bundle(&b, Some("blank-mandatory-field"));
    let ds = b.join("datasheet/datasheet.json");
    let o = temlm(&["validate", ds.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("missing motivation.known_non_goals"));
    let o = temlm(&["--format", "dat", "validate", ds.to_str().unwrap()]);
    assert_eq!(stdout(&o).lines().next(), Some("section pct"));
}

#[test]
fn out_dir_receives_report_file() {
    let tmp = tempfile::tempdir().unwrap();
    let b = tmp.path().join("b");
    fixture_bundle(&b, None);
    let reports = tmp.path().join("reports");
    let o = Command::new(env!("CARGO_BIN_EXE_temlm"))
        .args(["--format", "json", "gate", b.to_str().unwrap()])
        .env("TEMLM_OUT_DIR", &reports)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let written = std::fs::read(reports.join("gate_report.json")).unwrap();
    assert_eq!(written, o.stdout);
}
