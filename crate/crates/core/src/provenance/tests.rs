use std::fs;

use proptest::prelude::*;
use serde_json::{json, Value};

use super::*;

const TS: &str = "2024-03-01T09:00:00Z";

fn h(c: char) -> String {
    c.to_string().repeat(64)
}

/// extraction -> deidentification -> normalization -> split_sampling, the
/// split producing the evaluation set.
fn pipeline() -> ProvBundle {
    BundleBuilder::new()
        .agent("etl-bot", "software", "extraction service")
        .agent("privacy-team", "organization", "privacy office")
        .agent("ml-eng", "person", "ML engineer")
        .entity("raw-notes", Layer::Data, &h('1'), "raw-v1", None)
        .entity("deid-notes", Layer::Data, &h('2'), "deid-v1", None)
        .entity("deid-rules", Layer::Code, &h('3'), "rules-v4", None)
        .entity("norm-notes", Layer::Data, &h('4'), "norm-v1", None)
        .entity("eval-set", Layer::Data, &h('5'), "test-v1", None)
        .entity("train-set", Layer::Data, &h('6'), "train-v1", None)
        .activity("extract", EventType::Extraction, TS, "etl-bot", exemplar_fields(EventType::Extraction), &[], &["raw-notes"])
        .activity(
            "deid",
            EventType::Deidentification,
            TS,
            "privacy-team",
            exemplar_fields(EventType::Deidentification),
            &["raw-notes", "deid-rules"],
            &["deid-notes"],
        )
        .activity("normalize", EventType::Normalization, TS, "ml-eng", exemplar_fields(EventType::Normalization), &["deid-notes"], &["norm-notes"])
        .activity(
            "split",
            EventType::SplitSampling,
            TS,
            "ml-eng",
            exemplar_fields(EventType::SplitSampling),
            &["norm-notes"],
            &["eval-set", "train-set"],
        )
        .build()
}

#[test]
fn pipeline_is_valid_and_round_trips_through_files() {
    let b = pipeline();
    assert!(b.validate().is_empty(), "{:?}", b.validate());
    let dir = tempfile::tempdir().unwrap();
    b.write(dir.path()).unwrap();
    let loaded = load_bundle(dir.path()).unwrap();
    assert_eq!(loaded.entities, b.entities);
    assert_eq!(loaded.activities, b.activities);
    assert_eq!(loaded.edges, b.edges);
    assert_eq!(loaded.checksums.len(), 4);
}

#[test]
fn empty_bundle_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let b = load_bundle(dir.path()).unwrap();
    assert!(b.entities.is_empty());
    ProvBundle::default().write(dir.path()).unwrap();
    assert!(load_bundle(dir.path()).unwrap().entities.is_empty());
}

#[test]
fn edited_graph_file_breaks_checksum() {
    let dir = tempfile::tempdir().unwrap();
    pipeline().write(dir.path()).unwrap();
    let path = dir.path().join(AGENTS_FILE);
    let text = fs::read_to_string(&path).unwrap().replace("ML engineer", "ML engineers");
    fs::write(&path, text).unwrap();
    match load_bundle(dir.path()) {
        Err(Error::Provenance(v)) => {
            assert!(matches!(&v[..], [Violation::ChecksumMismatch { file, .. }] if file == AGENTS_FILE))
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn dangling_edge_reported() {
    let mut b = pipeline();
    b.edges.push(ProvEdge {
        kind: EdgeKind::Used,
        activity_id: "normalize".into(),
        entity_id: "ghost".into(),
    });
    let v = b.validate();
    assert!(matches!(&v[..], [Violation::DanglingEdge { entity_id, .. }] if entity_id == "ghost"));
}

#[test]
fn multiple_generators_and_unknown_agent_collected_together() {
    let mut b = pipeline();
    b.edges.push(ProvEdge {
        kind: EdgeKind::WasGeneratedBy,
        activity_id: "normalize".into(),
        entity_id: "deid-notes".into(),
    });
    b.activities[0].agent_id = "nobody".into();
    b.activities[1].timestamp = "yesterday".into();
    let v = b.validate();
    assert!(v.iter().any(|x| matches!(x, Violation::MultipleGenerators { entity_id, .. } if entity_id == "deid-notes")));
    assert!(v.iter().any(|x| matches!(x, Violation::UnknownAgent { agent_id, .. } if agent_id == "nobody")));
    assert!(v.iter().any(|x| matches!(x, Violation::BadTimestamp { .. })));
}

#[test]
fn training_run_missing_field_names_row_and_field() {
    let mut fields = exemplar_fields(EventType::TrainingRun);
    fields.remove("code_commit");
    let b = BundleBuilder::new()
        .agent("a", "person", "x")
        .activity("train", EventType::TrainingRun, TS, "a", fields, &[], &[])
        .build();
    let v = b.validate();
    assert_eq!(
        v,
        vec![Violation::MissingMinimalField {
            activity_id: "train".into(),
            event_type: EventType::TrainingRun,
            field: "code_commit".into(),
        }]
    );
    assert!(v[0].to_string().contains("training_run"));
}

#[test]
fn minimal_field_rejection_matrix() {
    for et in EventType::ALL {
        let ok = ProvActivity {
            activity_id: "a".into(),
            event_type: et,
            timestamp: TS.into(),
            agent_id: "x".into(),
            fields: exemplar_fields(et),
        };
        assert!(missing_minimal_fields(&ok).is_empty(), "{et} exemplar");
        for field in et.minimal_fields() {
            let mut bad = ok.clone();
            bad.fields.remove(field);
            assert_eq!(missing_minimal_fields(&bad), vec![field.as_str()], "{et} without {field}");
        }
    }
}

#[test]
fn lineage_of_eval_set_reproduces_pipeline_chain() {
    let b = pipeline();
    let l = lineage(&b, "eval-set").unwrap();
    assert_eq!(
        l.event_chain(),
        vec![EventType::Extraction, EventType::Deidentification, EventType::Normalization, EventType::SplitSampling]
    );
    assert_eq!(l.depth, 4);
    assert_eq!(l.entities, ["deid-notes", "deid-rules", "norm-notes", "raw-notes"]);
    assert_eq!(l.agents, ["etl-bot", "ml-eng", "privacy-team"]);
}

#[test]
fn lineage_without_generator_is_depth_zero() {
    let l = lineage(&pipeline(), "deid-rules").unwrap();
    assert_eq!(l.depth, 0);
    assert!(l.steps.is_empty() && l.entities.is_empty());
}

#[test]
fn shared_ancestor_subtrees_identical() {
    let b = pipeline();
    let a = lineage(&b, "eval-set").unwrap();
    let t = lineage(&b, "train-set").unwrap();
    assert_eq!(a.steps, t.steps);
    assert_eq!(a.entities, t.entities);
}

#[test]
fn unknown_entity_errors() {
    assert!(matches!(lineage(&pipeline(), "nope"), Err(Error::UnknownEntity(_))));
    assert!(matches!(diff_versions(&pipeline(), "eval-set", "nope"), Err(Error::UnknownEntity(_))));
}

fn checkpoints() -> ProvBundle {
    let mut fa = exemplar_fields(EventType::TrainingRun);
    let mut fb = fa.clone();
    fa.insert("hyperparameters".into(), json!({"lr": 5e-5, "epochs": 3}));
    fb.insert("hyperparameters".into(), json!({"lr": 3e-5, "epochs": 3}));
    BundleBuilder::new()
        .agent("ml", "person", "ML engineer")
        .entity("train-data", Layer::Data, &h('a'), "v3", None)
        .entity("ckpt-a", Layer::Model, &h('b'), "m1", None)
        .entity("ckpt-b", Layer::Model, &h('c'), "m2", None)
        .entity("other-data", Layer::Data, &h('d'), "v9", None)
        .entity("other-model", Layer::Model, &h('e'), "x1", None)
        .activity("train-a", EventType::TrainingRun, TS, "ml", fa, &["train-data"], &["ckpt-a"])
        .activity("train-b", EventType::TrainingRun, TS, "ml", fb, &["train-data"], &["ckpt-b"])
        .activity("train-x", EventType::TrainingRun, TS, "ml", exemplar_fields(EventType::TrainingRun), &["other-data"], &["other-model"])
        .build()
}

#[test]
fn diff_of_entity_with_itself_is_empty() {
    let b = checkpoints();
    assert!(diff_versions(&b, "ckpt-a", "ckpt-a").unwrap().is_empty());
}

#[test]
fn checkpoints_differing_in_hyperparameters() {
    let b = checkpoints();
    assert!(b.validate().is_empty());
    let d = diff_versions(&b, "ckpt-a", "ckpt-b").unwrap();
    assert_eq!(d.field_changes.len(), 1);
    assert_eq!(d.field_changes[0].field, "hyperparameters");
    assert!(d.activities_only_in_a.is_empty() && d.activities_only_in_b.is_empty());
    assert!(d.entities_only_in_a.is_empty() && d.entities_only_in_b.is_empty());
    assert_eq!(d.entity_changes.len(), 1);
    assert_eq!(diff_versions(&b, "ckpt-b", "ckpt-a").unwrap(), d.swapped());
}

#[test]
fn disjoint_lineages_listed_in_full() {
    let b = checkpoints();
    let d = diff_versions(&b, "ckpt-a", "other-model").unwrap();
    assert_eq!(d.activities_only_in_a, ["train-a"]);
    assert_eq!(d.activities_only_in_b, ["train-x"]);
    assert_eq!(d.entities_only_in_a, ["ckpt-a", "train-data"]);
    assert_eq!(d.entities_only_in_b, ["other-data", "other-model"]);
    assert!(d.field_changes.is_empty());
}

fn release_dir(b: &mut ProvBundle) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (i, e) in b.entities.iter_mut().enumerate() {
        let rel = format!("artifacts/{}.bin", e.entity_id);
        let path = dir.path().join(&rel);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        let bytes = format!("artifact {i} for {}", e.entity_id).into_bytes();
        fs::write(&path, &bytes).unwrap();
        e.hash = crate::digest::sha256_hex(&bytes);
        e.path = Some(rel);
    }
    dir
}

#[test]
fn verify_hashes_match_then_single_tamper() {
    let mut b = pipeline();
    let dir = release_dir(&mut b);
    let report = verify_hashes(&b, dir.path());
    assert!(report.passed());
    assert!(report.entries.iter().all(|e| e.status == IntegrityStatus::Match));

    let path = dir.path().join("artifacts/norm-notes.bin");
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] ^= 0x01;
    fs::write(&path, bytes).unwrap();
    let report = verify_hashes(&b, dir.path());
    assert!(!report.passed());
    let bad = report.mismatches();
    assert_eq!(bad.len(), 1);
    assert_eq!(bad[0].entity_id, "norm-notes");
}

#[test]
fn outside_root_and_missing_are_absent() {
    let mut b = pipeline();
    let dir = release_dir(&mut b);
    b.entities[0].path = Some("../escape.bin".into());
    b.entities[1].path = Some("/etc/hostname".into());
    b.entities[2].path = Some("artifacts/not-there.bin".into());
    let report = verify_hashes(&b, dir.path());
    let absent = report
        .entries
        .iter()
        .filter(|e| matches!(e.status, IntegrityStatus::Absent { .. }))
        .count();
    assert_eq!(absent, 3);
    assert!(report.passed());
}

#[test]
fn verify_is_order_independent() {
    let mut b = pipeline();
    let dir = release_dir(&mut b);
    let a = verify_hashes(&b, dir.path());
    b.entities.reverse();
    assert_eq!(verify_hashes(&b, dir.path()), a);
}

fn random_graph(n_entities: usize, links: &[(usize, usize, bool)]) -> ProvBundle {
    // Activity i generates entity i; `used` edges only point to lower-numbered
    // entities, so the graph is acyclic by construction.
    let mut b = BundleBuilder::new().agent("a", "software", "gen");
    for i in 0..n_entities {
        b = b.entity(&format!("e{i}"), Layer::Data, &h('f'), "v", None).activity(
            &format!("a{i}"),
            EventType::Normalization,
            TS,
            "a",
            exemplar_fields(EventType::Normalization),
            &[],
            &[&format!("e{i}")],
        );
    }
    let mut bundle = b.build();
    for &(x, y, _) in links {
        let (x, y) = (x % n_entities, y % n_entities);
        let (hi, lo) = (x.max(y), x.min(y));
        if hi != lo {
            bundle.edges.push(ProvEdge {
                kind: EdgeKind::Used,
                activity_id: format!("a{hi}"),
                entity_id: format!("e{lo}"),
            });
        }
    }
    bundle
}

proptest! {
    #[test]
    fn injected_cycles_rejected(
        n in 2usize..12,
        links in proptest::collection::vec((0usize..12, 0usize..12, any::<bool>()), 0..30),
        back in (0usize..12, 0usize..12),
    ) {
        let mut bundle = random_graph(n, &links);
        prop_assert!(bundle.validate().is_empty());
        for i in 0..n {
            let id = format!("e{i}");
            let l = lineage(&bundle, &id).unwrap();
            prop_assert!(!l.entities.contains(&id));
        }
        // Each generator uses the other's output.
        let (hi, lo) = (back.0 % n, back.1 % n);
        prop_assume!(hi != lo);
        bundle.edges.push(ProvEdge { kind: EdgeKind::Used, activity_id: format!("a{hi}"), entity_id: format!("e{lo}") });
        bundle.edges.push(ProvEdge { kind: EdgeKind::Used, activity_id: format!("a{lo}"), entity_id: format!("e{hi}") });
        let cyclic = bundle.validate().iter().any(|v| matches!(v, Violation::Cycle { .. }));
        prop_assert!(cyclic);
    }
}

#[test]
fn self_use_is_a_cycle() {
    let mut b = pipeline();
    b.edges.push(ProvEdge {
        kind: EdgeKind::Used,
        activity_id: "normalize".into(),
        entity_id: "norm-notes".into(),
    });
    assert!(b.validate().iter().any(|v| matches!(v, Violation::Cycle { .. })));
}

#[test]
fn activity_field_values_survive_json() {
    let b = pipeline();
    let v: Value = serde_json::to_value(&b.activities[0]).unwrap();
    let back: ProvActivity = serde_json::from_value(v).unwrap();
    assert_eq!(back, b.activities[0]);
}
