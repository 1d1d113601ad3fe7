//! Event types and their minimal fields, loaded from the shipped event schema.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ProvActivity;

/// Raw event schema file, shipped with the crate.
pub const EVENT_SCHEMA_JSON: &str = include_str!("../../assets/prov_event_schema_v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Extraction,
    Deidentification,
    Normalization,
    Labeling,
    SplitSampling,
    TrainingRun,
    EvaluationRun,
    Release,
}

impl EventType {
    pub const ALL: [EventType; 8] = [
        EventType::Extraction,
        EventType::Deidentification,
        EventType::Normalization,
        EventType::Labeling,
        EventType::SplitSampling,
        EventType::TrainingRun,
        EventType::EvaluationRun,
        EventType::Release,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Extraction => "extraction",
            EventType::Deidentification => "deidentification",
            EventType::Normalization => "normalization",
            EventType::Labeling => "labeling",
            EventType::SplitSampling => "split_sampling",
            EventType::TrainingRun => "training_run",
            EventType::EvaluationRun => "evaluation_run",
            EventType::Release => "release",
        }
    }

    /// Keys every activity of this type must carry.
    pub fn minimal_fields(self) -> &'static [String] {
        &event_schema().event_types[&self]
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Deserialize)]
struct EventSchema {
    #[allow(dead_code)]
    schema_version: String,
    event_types: BTreeMap<EventType, Vec<String>>,
}

fn event_schema() -> &'static EventSchema {
    static SCHEMA: OnceLock<EventSchema> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        let s: EventSchema = serde_json::from_str(EVENT_SCHEMA_JSON).expect("shipped event schema parses");
        assert_eq!(s.event_types.len(), EventType::ALL.len(), "every event type is listed");
        s
    })
}

/// A value counts as present when it is not null, not blank text and not an
/// empty array or object.
pub fn is_present(v: &Value) -> bool {
    match v {
        Value::Null => false,
        Value::String(s) => !s.trim().is_empty(),
        Value::Array(a) => !a.is_empty(),
        Value::Object(o) => !o.is_empty(),
        Value::Bool(_) | Value::Number(_) => true,
    }
}

/// Minimal fields of the activity's event type that are absent or empty.
pub fn missing_minimal_fields(activity: &ProvActivity) -> Vec<&'static str> {
    activity
        .event_type
        .minimal_fields()
        .iter()
        .filter(|k| !activity.fields.get(k.as_str()).is_some_and(is_present))
        .map(String::as_str)
        .collect()
}

/// A fully populated example field map for one event type.
pub fn exemplar_fields(event_type: EventType) -> BTreeMap<String, Value> {
    let h = |c: char| Value::String(c.to_string().repeat(64));
    let pairs: Vec<(&str, Value)> = match event_type {
        EventType::Extraction => vec![
            ("source_system", json!("ehr-warehouse")),
            ("query", json!("SELECT note_id, text FROM notes WHERE year BETWEEN 2010 AND 2019")),
            ("timestamp", json!("2024-03-01T09:00:00Z")),
            ("filters", json!(["adult", "english"])),
            ("output_hash", h('a')),
        ],
        EventType::Deidentification => vec![
            ("method_version", json!("hybrid-deid/2.3")),
            ("phi_patterns", json!("phi_patterns.json@v4")),
            ("manual_review_rate", json!(0.02)),
            ("output_hash", h('b')),
        ],
        EventType::Normalization => vec![
            ("tokenizer", json!("wordpiece-uncased-30k")),
            ("rules", json!(["strip-templates", "unicode-nfc"])),
            ("language_filters", json!(["en"])),
            ("output_hash", h('c')),
        ],
        EventType::Labeling => vec![
            ("guideline_version", json!("icd-guidelines/1.2")),
            ("annotators", json!(3)),
            ("adjudication_rule", json!("senior coder resolves ties")),
            ("reliability_stats", json!({"statistic": "fleiss_kappa", "value": 0.81})),
        ],
        EventType::SplitSampling => vec![
            ("split_key", json!("patient")),
            ("random_seed", json!(13)),
            ("leakage_audit_results", json!({"0.85": 0.0})),
        ],
        EventType::TrainingRun => vec![
            ("model_config", json!({"layers": 12, "hidden": 768})),
            ("code_commit", json!("3f2a9c1")),
            ("hyperparameters", json!({"lr": 5e-5, "epochs": 3})),
            ("compute_env", json!("8x A100, cuda 12.2")),
            ("checkpoints", json!(["ckpt-final"])),
        ],
        EventType::EvaluationRun => vec![
            ("dataset_version", json!("notes-v3/test")),
            ("metric_definitions", json!(["micro_f1", "macro_f1"])),
            ("confidence_intervals", json!({"micro_f1": [0.75, 0.77]})),
            ("error_audit", json!("error_audit.md")),
        ],
        EventType::Release => vec![
            ("license_terms", json!("EUPL-1.2")),
            ("documentation_bundle", json!("release/")),
            ("signed_checksums", json!("release/checksums")),
            ("deprecation_policy", json!("supported for 24 months")),
        ],
    };
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
