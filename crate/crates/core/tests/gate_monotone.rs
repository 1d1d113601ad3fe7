use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use proptest::prelude::*;
use serde_json::Value;

use temlm_core::gate::{
    check_release, gate, seal_bundle, write_fixture_bundle, Defect, FixtureBundleSpec, GatePolicy, ANNOTATIONS_FILE, CHECKSUMS_FILE,
    DATASHEET_FILE,
};
use temlm_core::schema::Schema;

/// Edits that can only make a bundle's evidence worse.
#[derive(Debug, Clone, Copy)]
enum Worsen {
    /// Blank the n-th mandatory datasheet field, resealing a sealed bundle.
    BlankField(usize),
    /// Delete the annotation input, resealing a sealed bundle.
    DropAnnotations,
    /// Corrupt the n-th manifest hash without resealing.
    CorruptManifest(usize),
}

fn worsen() -> impl Strategy<Value = Worsen> {
    prop_oneof![
        (0usize..64).prop_map(Worsen::BlankField),
        Just(Worsen::DropAnnotations),
        (0usize..64).prop_map(Worsen::CorruptManifest),
    ]
}

fn templates() -> &'static (tempfile::TempDir, Vec<PathBuf>) {
    static T: OnceLock<(tempfile::TempDir, Vec<PathBuf>)> = OnceLock::new();
    T.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let paths = Defect::ALL
            .iter()
            .map(|&d| {
                let p = dir.path().join(format!("{d:?}"));
                let spec = FixtureBundleSpec {
                    n_patients: 60,
                    defect: Some(d),
                    ..FixtureBundleSpec::default()
                };
                write_fixture_bundle(&p, &spec).unwrap();
                p
            })
            .collect();
        (dir, paths)
    })
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// Reseals only a bundle whose manifest already matched, so a broken
/// manifest is never repaired.
fn reseal_if_sealed(root: &Path, sealed: bool) {
    if sealed {
        seal_bundle(root).unwrap();
    }
}

fn apply(root: &Path, op: Worsen) {
    let sealed = check_release(root, false).unwrap().1.is_empty();
    match op {
        Worsen::BlankField(n) => {
            let schema = Schema::datasheet();
            let mandatory: Vec<_> = schema.mandatory().collect();
            let spec = mandatory[n % mandatory.len()];
            let path = root.join(DATASHEET_FILE);
            let mut doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
            if let Some(field) = doc["sections"][spec.section_id.as_str()].get_mut(&spec.field_id) {
                field["content"] = Value::Null;
            }
            fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
            reseal_if_sealed(root, sealed);
        }
        Worsen::DropAnnotations => {
            let path = root.join(ANNOTATIONS_FILE);
            if path.exists() {
                fs::remove_file(path).unwrap();
                reseal_if_sealed(root, sealed);
            }
        }
        Worsen::CorruptManifest(n) => {
            let path = root.join(CHECKSUMS_FILE);
            let text = fs::read_to_string(&path).unwrap();
            let mut lines: Vec<String> = text.lines().map(String::from).collect();
            let i = n % lines.len();
            let flipped = if lines[i].starts_with('0') { '1' } else { '0' };
            lines[i].replace_range(0..1, &flipped.to_string());
            fs::write(&path, lines.join("\n") + "\n").unwrap();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, ..ProptestConfig::default() })]

    // Worsening a failing bundle never flips it to pass or clears a failing check.
    #[test]
    fn worse_evidence_never_passes(which in 0usize..7, ops in proptest::collection::vec(worsen(), 1..4)) {
        let policy = GatePolicy::default_policy();
        let (_, paths) = templates();
        let before = gate(&paths[which], &policy).unwrap();
        prop_assert!(!before.passed());

        let work = tempfile::tempdir().unwrap();
        copy_dir(&paths[which], work.path());
        for &op in &ops {
            apply(work.path(), op);
        }
        let after = gate(work.path(), &policy).unwrap();
        prop_assert!(!after.passed());
        let still_failing = after.failing_checks();
        for id in before.failing_checks() {
            prop_assert!(still_failing.contains(&id), "{} recovered after {:?}", id, ops);
        }
    }
}
