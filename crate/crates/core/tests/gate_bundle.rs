use std::fs;

use temlm_core::gate::{
    assemble_bundle, gate, verify_bundle, write_fixture_bundle, AssembleInputs, Defect, FindingKind, FixtureBundleSpec,
    GatePolicy, CARD_FILE, DATASHEET_FILE, PREPROCESS_FILE, REPORT_FILE,
};
use temlm_core::Error;

fn bundle(defect: Option<Defect>) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_fixture_bundle(
        dir.path(),
        &FixtureBundleSpec {
            defect,
            ..FixtureBundleSpec::default()
        },
    )
    .unwrap();
    dir
}

#[test]
fn golden_bundle_passes_and_is_consistent() {
    let dir = bundle(None);
    let policy = GatePolicy::default_policy();
    let report = gate(dir.path(), &policy).unwrap();
    assert!(report.passed(), "{}", report.render_text());
    assert_eq!(report.policy_hash, policy.policy_hash());
    let v = verify_bundle(dir.path());
    assert!(v.consistent, "{}", v.render_text());
}

#[test]
fn gate_report_is_byte_identical_across_runs() {
    let dir = bundle(None);
    let policy = GatePolicy::default_policy();
    let a = gate(dir.path(), &policy).unwrap().to_json_pretty();
    let b = gate(dir.path(), &policy).unwrap().to_json_pretty();
    assert_eq!(a, b);
    let other = bundle(None);
    assert_eq!(a, gate(other.path(), &policy).unwrap().to_json_pretty());
}

#[test]
fn each_defect_fails_its_named_check() {
    let policy = GatePolicy::default_policy();
    for d in Defect::ALL {
        let dir = bundle(Some(d));
        let report = gate(dir.path(), &policy).unwrap();
        assert!(!report.passed(), "{d:?}");
        let failing = report.failing_checks();
        assert!(failing.contains(&d.expected_check()), "{d:?}: {failing:?}");
        if d == Defect::MissingDriftPlan {
            // The drift field is also mandatory.
            assert_eq!(failing, vec!["doc_completeness", "drift_plan"]);
        } else {
            assert_eq!(failing, vec![d.expected_check()], "{d:?}");
        }
    }
}

#[test]
fn stale_provenance_names_the_entity() {
    let dir = bundle(Some(Defect::StaleProvenance));
    let v = verify_bundle(dir.path());
    assert!(!v.consistent);
    let stale = v.of_kind(FindingKind::StaleEntity);
    assert_eq!(stale.len(), 1, "{}", v.render_text());
    assert_eq!(stale[0].subject, "preprocess-config");
    assert!(stale[0].detail.contains(PREPROCESS_FILE));
}

#[test]
fn deleted_field_after_report_is_a_metric_mismatch() {
    let dir = bundle(None);
    let path = dir.path().join(DATASHEET_FILE);
    let mut doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    doc["sections"]["labeling"]
        .as_object_mut()
        .unwrap()
        .remove("coding_systems");
    fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let v = verify_bundle(dir.path());
    assert!(!v.consistent);
    let m = v.of_kind(FindingKind::MetricMismatch);
    assert!(m.iter().any(|f| f.subject == "completeness.datasheet.populated"), "{}", v.render_text());
}

#[test]
fn missing_directory_is_named() {
    let dir = bundle(None);
    fs::remove_dir_all(dir.path().join("model_card")).unwrap();
    match gate(dir.path(), &GatePolicy::default_policy()) {
        Err(Error::MissingBundleComponent(d)) => assert_eq!(d, "model_card"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn assemble_then_verify_round_trip() {
    let src = bundle(None);
    let out = tempfile::tempdir().unwrap();
    let inputs = AssembleInputs {
        datasheet: src.path().join(DATASHEET_FILE),
        card: src.path().join(CARD_FILE),
        provenance: src.path().join("provenance"),
        metrics: src.path().join("metrics"),
        signature: None,
    };
    let m1 = assemble_bundle(&inputs, out.path(), false).unwrap();
    assert!(verify_bundle(out.path()).consistent);
    assert!(gate(out.path(), &GatePolicy::default_policy()).unwrap().passed());
    let m2 = assemble_bundle(&inputs, out.path(), false).unwrap();
    assert_eq!(m1, m2);
    assert!(m1.entries.iter().any(|e| e.path == REPORT_FILE));
}
