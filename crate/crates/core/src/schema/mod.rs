//! Tiered field schemas for datasheets and model cards.
//!
//! The shipped schema (`assets/doc_schema_v1.json`) fixes which fields are
//! mandatory, recommended or optional in each section. Its SHA-256 is
//! recorded alongside every completeness value so numbers computed against
//! different schema versions are never compared silently.

mod completeness;
mod doc;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};

pub use completeness::{
    combined_completeness, completeness, completeness_drift, default_drift_groups, CompletenessReport, DriftRow, DriftTrace,
    SectionCompleteness, TierCompleteness,
};
pub use doc::{parse_doc, parse_doc_str, ArtifactDoc, DocWarning, FieldKey, FieldValue, ParsedDoc};

pub const DOC_SCHEMA_JSON: &str = include_str!("../../assets/doc_schema_v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    Datasheet,
    Card,
}

impl DocKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DocKind::Datasheet => "datasheet",
            DocKind::Card => "card",
        }
    }
}

impl fmt::Display for DocKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionId {
    // datasheet
    Motivation,
    Composition,
    Collection,
    DeidPrivacy,
    Labeling,
    MissingnessQuality,
    SplitsLeakage,
    Maintenance,
    // card
    Overview,
    IntendedUse,
    TrainingData,
    Evaluation,
    Limitations,
    Governance,
    EthicsSafety,
}

impl SectionId {
    pub const DATASHEET: [SectionId; 8] = [
        SectionId::Motivation,
        SectionId::Composition,
        SectionId::Collection,
        SectionId::DeidPrivacy,
        SectionId::Labeling,
        SectionId::MissingnessQuality,
        SectionId::SplitsLeakage,
        SectionId::Maintenance,
    ];

    pub const CARD: [SectionId; 7] = [
        SectionId::Overview,
        SectionId::IntendedUse,
        SectionId::TrainingData,
        SectionId::Evaluation,
        SectionId::Limitations,
        SectionId::Governance,
        SectionId::EthicsSafety,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SectionId::Motivation => "motivation",
            SectionId::Composition => "composition",
            SectionId::Collection => "collection",
            SectionId::DeidPrivacy => "deid_privacy",
            SectionId::Labeling => "labeling",
            SectionId::MissingnessQuality => "missingness_quality",
            SectionId::SplitsLeakage => "splits_leakage",
            SectionId::Maintenance => "maintenance",
            SectionId::Overview => "overview",
            SectionId::IntendedUse => "intended_use",
            SectionId::TrainingData => "training_data",
            SectionId::Evaluation => "evaluation",
            SectionId::Limitations => "limitations",
            SectionId::Governance => "governance",
            SectionId::EthicsSafety => "ethics_safety",
        }
    }

    /// Short label used in the `section pct` plot data.
    pub fn short_label(self) -> &'static str {
        match self {
            SectionId::DeidPrivacy => "deid",
            SectionId::MissingnessQuality => "missingness",
            SectionId::SplitsLeakage => "splits",
            other => other.as_str(),
        }
    }

    pub fn parse(s: &str) -> Option<SectionId> {
        SectionId::DATASHEET
            .iter()
            .chain(SectionId::CARD.iter())
            .copied()
            .find(|id| id.as_str() == s)
    }

    pub fn kind(self) -> DocKind {
        if SectionId::DATASHEET.contains(&self) {
            DocKind::Datasheet
        } else {
            DocKind::Card
        }
    }
}

impl fmt::Display for SectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Mandatory,
    Recommended,
    Optional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Text,
    EnumChoice,
    Number,
    Reference,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub section_id: SectionId,
    pub field_id: String,
    pub tier: Tier,
    pub value_kind: ValueKind,
    /// Allowed values for `enum_choice` fields.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub doc_kind: DocKind,
    pub schema_version: String,
    fields: Vec<FieldSpec>,
    index: BTreeMap<(SectionId, String), usize>,
    hash: String,
}

#[derive(Deserialize)]
struct RawField {
    field_id: String,
    tier: Tier,
    value_kind: ValueKind,
    #[serde(default)]
    choices: Vec<String>,
}

#[derive(Deserialize)]
struct RawSection {
    section_id: SectionId,
    fields: Vec<RawField>,
}

#[derive(Deserialize)]
struct RawKind {
    sections: Vec<RawSection>,
}

#[derive(Deserialize)]
struct RawSchemaFile {
    schema_version: String,
    datasheet: RawKind,
    card: RawKind,
}

impl Schema {
    /// Builds a schema, enforcing unique `(section, field)` keys, sections
    /// that belong to `doc_kind`, at least one mandatory field per section,
    /// and non-empty choices for enum fields.
    pub fn new(doc_kind: DocKind, schema_version: impl Into<String>, fields: Vec<FieldSpec>) -> Result<Self> {
        let schema_version = schema_version.into();
        let mut index = BTreeMap::new();
        let mut sections: BTreeMap<SectionId, bool> = BTreeMap::new();
        for (i, f) in fields.iter().enumerate() {
            if f.section_id.kind() != doc_kind {
                return Err(Error::Schema(format!("section `{}` does not belong to a {doc_kind}", f.section_id)));
            }
            if index.insert((f.section_id, f.field_id.clone()), i).is_some() {
                return Err(Error::Schema(format!("duplicate field `{}.{}`", f.section_id, f.field_id)));
            }
            if f.value_kind == ValueKind::EnumChoice && f.choices.is_empty() {
                return Err(Error::Schema(format!("enum field `{}.{}` has no choices", f.section_id, f.field_id)));
            }
            *sections.entry(f.section_id).or_insert(false) |= f.tier == Tier::Mandatory;
        }
        if let Some((s, _)) = sections.iter().find(|(_, has)| !**has) {
            return Err(Error::Schema(format!("section `{s}` has no mandatory field")));
        }
        let hash = sha256_hex(&crate::digest::canonical_bytes(&(doc_kind, &schema_version, &fields)));
        Ok(Schema {
            doc_kind,
            schema_version,
            fields,
            index,
            hash,
        })
    }

    /// Parses a schema file holding both document kinds and returns the requested one.
    pub fn from_json(text: &str, doc_kind: DocKind) -> Result<Self> {
        let raw: RawSchemaFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("schema file: {e}")))?;
        let kind = match doc_kind {
            DocKind::Datasheet => raw.datasheet,
            DocKind::Card => raw.card,
        };
        let fields = kind
            .sections
            .into_iter()
            .flat_map(|s| {
                s.fields.into_iter().map(move |f| FieldSpec {
                    section_id: s.section_id,
                    field_id: f.field_id,
                    tier: f.tier,
                    value_kind: f.value_kind,
                    choices: f.choices,
                })
            })
            .collect();
        Schema::new(doc_kind, raw.schema_version, fields)
    }

    /// The shipped datasheet schema.
    pub fn datasheet() -> Self {
        Schema::from_json(DOC_SCHEMA_JSON, DocKind::Datasheet).expect("shipped schema is valid")
    }

    /// The shipped model card schema.
    pub fn card() -> Self {
        Schema::from_json(DOC_SCHEMA_JSON, DocKind::Card).expect("shipped schema is valid")
    }

    pub fn shipped(kind: DocKind) -> Self {
        match kind {
            DocKind::Datasheet => Schema::datasheet(),
            DocKind::Card => Schema::card(),
        }
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn field(&self, section: SectionId, field_id: &str) -> Option<&FieldSpec> {
        self.index.get(&(section, field_id.to_string())).map(|&i| &self.fields[i])
    }

    pub fn mandatory(&self) -> impl Iterator<Item = &FieldSpec> {
        self.fields.iter().filter(|f| f.tier == Tier::Mandatory)
    }

    /// Sections in declaration order.
    pub fn sections(&self) -> Vec<SectionId> {
        let mut seen = BTreeSet::new();
        self.fields
            .iter()
            .filter(|f| seen.insert(f.section_id))
            .map(|f| f.section_id)
            .collect()
    }

    /// Hash over the canonical form of the schema.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}
