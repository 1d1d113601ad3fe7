use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::bundle::*;
use super::suite::{compute_metrics, MetricInputs, MetricSettings};
use crate::corpus::{make_fixture, write_corpus, FixtureKnobs, ResidualPhi};
use crate::digest::{sha256_file, sha256_hex};
use crate::error::{Error, Result};
use crate::leakage::{Declaration, Disclosures};
use crate::metrics::{Annotations, PatternSet};
use crate::provenance::{exemplar_fields, BundleBuilder, EventType, Layer};
use crate::schema::{ArtifactDoc, FieldValue, Schema, SectionId, Tier, ValueKind};

/// A single planted defect in an otherwise release-ready bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defect {
    BlankMandatoryField,
    PatientOverlap,
    OverCeilingLeakage,
    MissingAgreement,
    MissingDriftPlan,
    TamperedChecksum,
    StaleProvenance,
}

impl Defect {
    pub const ALL: [Defect; 7] = [
        Defect::BlankMandatoryField,
        Defect::PatientOverlap,
        Defect::OverCeilingLeakage,
        Defect::MissingAgreement,
        Defect::MissingDriftPlan,
        Defect::TamperedChecksum,
        Defect::StaleProvenance,
    ];

    /// The gate check expected to catch this defect.
    pub fn expected_check(self) -> &'static str {
        match self {
            Defect::BlankMandatoryField => "doc_completeness",
            Defect::PatientOverlap => "patient_split",
            Defect::OverCeilingLeakage => "leakage_ceiling",
            Defect::MissingAgreement => "agreement_reported",
            Defect::MissingDriftPlan => "drift_plan",
            Defect::TamperedChecksum => "release_checksums",
            Defect::StaleProvenance => "provenance_hashes",
        }
    }
}

/// Size and seed of a generated bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureBundleSpec {
    pub n_patients: usize,
    pub notes_per_patient: usize,
    pub seed: u64,
    pub defect: Option<Defect>,
}

impl Default for FixtureBundleSpec {
    fn default() -> Self {
        FixtureBundleSpec {
            n_patients: 120,
            notes_per_patient: 3,
            seed: 7,
            defect: None,
        }
    }
}

const BLANKED_FIELD: (SectionId, &str) = (SectionId::Motivation, "known_non_goals");
const DRIFT_FIELD: (SectionId, &str) = (SectionId::Maintenance, "data_drift_monitoring");

/// Populates every mandatory and recommended field of `schema`.
fn filled_doc(schema: &Schema, version: &str) -> ArtifactDoc {
    let mut doc = ArtifactDoc::new(schema.doc_kind, version);
    for f in schema.fields().iter().filter(|f| f.tier != Tier::Optional) {
        let content = match f.value_kind {
            ValueKind::Boolean => json!(true),
            ValueKind::Number => json!(110_000_000),
            ValueKind::EnumChoice => json!(f.choices.last().expect("enum has choices")),
            ValueKind::Reference => json!(match (f.section_id, f.field_id.as_str()) {
                (SectionId::TrainingData, "linked_datasheets") => DATASHEET_FILE,
                (SectionId::SplitsLeakage, _) => REPORT_FILE,
                (SectionId::DeidPrivacy, _) => PATTERNS_FILE,
                _ => "docs/reference.md",
            }),
            ValueKind::Text => json!(format!("{} documented for this release", f.field_id.replace('_', " "))),
        };
        doc.set(f.section_id, &f.field_id, FieldValue::new(content, version));
    }
    doc
}

fn pairwise_annotations(n: usize, seed: u64) -> Annotations {
    const LABELS: [&str; 3] = ["present", "absent", "uncertain"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA11);
    let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let x = LABELS[rng.gen_range(0..3)];
        let y = if rng.gen_bool(0.8) { x } else { LABELS[rng.gen_range(0..3)] };
        a.push(x.to_string());
        b.push(y.to_string());
    }
    Annotations::Pairwise { labels_a: a, labels_b: b }
}

fn write(root: &Path, rel: &str, text: &str) -> Result<String> {
    let p = root.join(rel);
    if let Some(parent) = p.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    Ok(sha256_hex(text.as_bytes()))
}

/// Writes a complete, sealed release bundle under `out`, optionally with
/// one planted defect. Without a defect the bundle passes the default gate.
pub fn write_fixture_bundle(out: &Path, spec: &FixtureBundleSpec) -> Result<()> {
    let defect = spec.defect;
    let knobs = FixtureKnobs {
        icd_empty_frac: 0.03,
        quality_missing_frac: 0.05,
        phi_empty_frac: 0.2,
        icd_year_shift: 0.5,
        residual_phi: ResidualPhi {
            one_category_frac: 0.05,
            high_risk_frac: 0.01,
        },
        duplicate_across_splits: if defect == Some(Defect::OverCeilingLeakage) { 2 } else { 0 },
        patient_overlap: if defect == Some(Defect::PatientOverlap) { 1 } else { 0 },
        ..FixtureKnobs::default()
    };
    let (corpus, split) = make_fixture(spec.n_patients, spec.notes_per_patient, spec.seed, &knobs)?;
    for dir in BUNDLE_DIRS {
        let d = out.join(dir);
        if d.exists() {
            fs::remove_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }

    fs::create_dir_all(out.join("metrics/inputs")).map_err(|e| Error::io(out, e))?;
    write_corpus(&corpus, out.join(CORPUS_FILE))?;
    write(out, SPLIT_FILE, &split.to_json())?;
    let patterns = PatternSet::default_set();
    write(out, PATTERNS_FILE, &patterns.to_json_pretty())?;
    write(
        out,
        PREPROCESS_FILE,
        &(serde_json::to_string_pretty(&json!({
            "tokenizer": "whitespace",
            "lowercase": false,
            "rules": ["strip-templates", "collapse-whitespace"],
            "rules_version": 1
        }))
        .expect("json")
            + "\n"),
    )?;
    let annotations = (defect != Some(Defect::MissingAgreement)).then(|| pairwise_annotations(200, spec.seed));
    if let Some(a) = &annotations {
        write(out, ANNOTATIONS_FILE, &(serde_json::to_string_pretty(a).expect("json") + "\n"))?;
    }

    let mut datasheet = filled_doc(&Schema::datasheet(), "1.0");
    let card = filled_doc(&Schema::card(), "1.0");
    match defect {
        Some(Defect::BlankMandatoryField) => datasheet.set(BLANKED_FIELD.0, BLANKED_FIELD.1, FieldValue::new("", "1.0")),
        Some(Defect::MissingDriftPlan) => {
            datasheet.remove(DRIFT_FIELD.0, DRIFT_FIELD.1);
        }
        _ => {}
    }
    write(out, DATASHEET_FILE, &datasheet.to_json_pretty())?;
    write(out, CARD_FILE, &card.to_json_pretty())?;

    let declared = |what: &str| Declaration {
        checked: true,
        justification: format!("{what} reviewed by the release board"),
    };
    let settings = MetricSettings {
        seed: spec.seed,
        disclosures: Disclosures {
            label_leakage: Some(declared("label sources")),
            contamination: Some(declared("public benchmark overlap")),
        },
        ..MetricSettings::default()
    };
    let inputs = MetricInputs {
        corpus,
        split,
        patterns,
        annotations,
        datasheet: Some(datasheet),
        card: Some(card),
    };
    let report = compute_metrics(&inputs, &settings)?;
    write(out, REPORT_FILE, &report.to_json_pretty())?;
    for (name, body) in report.dat_files(&inputs.corpus) {
        write(out, &format!("{METRICS_DIR}/{name}"), &body)?;
    }

    let file = |rel: &str| sha256_file(&out.join(rel)).map_err(|e| Error::io(out.join(rel), e));
    let derived = |tag: &str| sha256_hex(format!("{tag}:{}", spec.seed).as_bytes());
    let with = |et: EventType, extra: &[(&str, Value)]| {
        let mut f = exemplar_fields(et);
        for (k, v) in extra {
            f.insert(k.to_string(), v.clone());
        }
        f
    };
    let corpus_hash = file(CORPUS_FILE)?;
    let mut b = BundleBuilder::new()
        .agent("pipeline", "software", "notes-pipeline 1.4")
        .agent("coders", "person", "annotation team")
        .agent("release-board", "organization", "release review board")
        .entity("raw-notes", Layer::Data, &derived("raw"), "extract-1", None)
        .entity("phi-patterns", Layer::Code, &file(PATTERNS_FILE)?, "v1", Some(PATTERNS_FILE))
        .entity("deid-notes", Layer::Data, &derived("deid"), "deid-1", None)
        .entity("preprocess-config", Layer::Code, &file(PREPROCESS_FILE)?, "v1", Some(PREPROCESS_FILE))
        .entity("corpus", Layer::Data, &corpus_hash, "1.0", Some(CORPUS_FILE))
        .entity("split-manifest", Layer::Data, &file(SPLIT_FILE)?, "1.0", Some(SPLIT_FILE))
        .entity("train-code", Layer::Code, &derived("code"), "3f2a9c1", None)
        .entity("model", Layer::Model, &derived("model"), "1.0", None)
        .entity("eval-results", Layer::Data, &derived("eval"), "1.0", None)
        .entity("release-record", Layer::Document, &derived("release"), "1.0", None)
        .activity(
            "extract",
            EventType::Extraction,
            "2024-01-02T08:00:00Z",
            "pipeline",
            with(EventType::Extraction, &[("output_hash", json!(derived("raw")))]),
            &[],
            &["raw-notes"],
        )
        .activity(
            "deidentify",
            EventType::Deidentification,
            "2024-01-03T08:00:00Z",
            "pipeline",
            with(
                EventType::Deidentification,
                &[
                    ("phi_patterns", json!(format!("{PATTERNS_FILE}@{}", inputs.patterns.hash()))),
                    ("output_hash", json!(derived("deid"))),
                ],
            ),
            &["raw-notes", "phi-patterns"],
            &["deid-notes"],
        )
        .activity(
            "normalize",
            EventType::Normalization,
            "2024-01-04T08:00:00Z",
            "pipeline",
            with(EventType::Normalization, &[("output_hash", json!(corpus_hash))]),
            &["deid-notes", "preprocess-config"],
            &["corpus"],
        );
    if let Some(a) = report.agreement.first() {
        b = b.entity("annotations", Layer::Data, &file(ANNOTATIONS_FILE)?, "1.0", Some(ANNOTATIONS_FILE));
        b = b.activity(
            "label",
            EventType::Labeling,
            "2024-01-05T08:00:00Z",
            "coders",
            with(
                EventType::Labeling,
                &[("reliability_stats", json!({ "statistic": a.statistic, "value": a.value, "ci": [a.ci_low, a.ci_high] }))],
            ),
            &["corpus"],
            &["annotations"],
        );
    } else {
        b = b
            .entity("annotations", Layer::Data, &derived("annotations"), "1.0", None)
            .activity(
                "label",
                EventType::Labeling,
                "2024-01-05T08:00:00Z",
                "coders",
                exemplar_fields(EventType::Labeling),
                &["corpus"],
                &["annotations"],
            );
    }
    let mut split_activity = report.leakage.to_activity("split", "pipeline", "2024-01-06T08:00:00Z");
    split_activity
        .fields
        .insert("output_hash".into(), json!(file(SPLIT_FILE)?));
    split_activity
        .fields
        .insert("audit_record_hash".into(), json!(report.leakage.record_hash()));
    let bundle = b
        .push_activity(split_activity, &["corpus"], &["split-manifest"])
        .activity(
            "train",
            EventType::TrainingRun,
            "2024-01-07T08:00:00Z",
            "pipeline",
            exemplar_fields(EventType::TrainingRun),
            &["corpus", "split-manifest", "annotations", "train-code"],
            &["model"],
        )
        .activity(
            "evaluate",
            EventType::EvaluationRun,
            "2024-01-08T08:00:00Z",
            "pipeline",
            exemplar_fields(EventType::EvaluationRun),
            &["model", "split-manifest"],
            &["eval-results"],
        )
        .activity(
            "release",
            EventType::Release,
            "2024-01-09T08:00:00Z",
            "release-board",
            exemplar_fields(EventType::Release),
            &["model", "eval-results"],
            &["release-record"],
        )
        .build();
    bundle.write(out.join(PROVENANCE_DIR))?;

    seal_bundle(out)?;
    match defect {
        Some(Defect::TamperedChecksum) => {
            let p = out.join(CHECKSUMS_FILE);
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let mut chars: Vec<char> = text.chars().collect();
            chars[0] = if chars[0] == '0' { '1' } else { '0' };
            fs::write(&p, chars.into_iter().collect::<String>()).map_err(|e| Error::io(&p, e))?;
        }
        Some(Defect::StaleProvenance) => {
            let p = out.join(PREPROCESS_FILE);
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            fs::write(&p, text.replace("\"rules_version\": 1", "\"rules_version\": 2")).map_err(|e| Error::io(&p, e))?;
            seal_bundle(out)?;
        }
        _ => {}
    }
    Ok(())
}

/// The datasheet field blanked by [`Defect::BlankMandatoryField`].
pub fn blanked_field() -> (SectionId, &'static str) {
    BLANKED_FIELD
}

