use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{DocKind, FieldSpec, Schema, SectionId, ValueKind};
use crate::digest::{canonical_json, sha256_hex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldKey {
    pub section: SectionId,
    pub field_id: String,
}

impl FieldKey {
    pub fn new(section: SectionId, field_id: impl Into<String>) -> Self {
        FieldKey {
            section,
            field_id: field_id.into(),
        }
    }
}

impl fmt::Display for FieldKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.section, self.field_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldValue {
    #[serde(default)]
    pub content: Value,
    #[serde(default)]
    pub version_stamp: Option<String>,
}

impl FieldValue {
    pub fn new(content: impl Into<Value>, version_stamp: &str) -> Self {
        FieldValue {
            content: content.into(),
            version_stamp: Some(version_stamp.to_string()),
        }
    }

    /// Non-empty content valid for the field's kind, plus a version stamp.
    pub fn is_populated(&self, spec: &FieldSpec) -> bool {
        let stamped = self.version_stamp.as_deref().is_some_and(|s| !s.trim().is_empty());
        stamped
            && match (&spec.value_kind, &self.content) {
                (ValueKind::Text | ValueKind::Reference, Value::String(s)) => !s.trim().is_empty(),
                (ValueKind::EnumChoice, Value::String(s)) => spec.choices.iter().any(|c| c == s),
                (ValueKind::Number, Value::Number(_)) => true,
                (ValueKind::Boolean, Value::Bool(_)) => true,
                _ => false,
            }
    }
}

/// A parsed datasheet or model card. Every key in `values` exists in the
/// schema it was parsed against.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactDoc {
    pub doc_kind: DocKind,
    pub version: String,
    pub values: BTreeMap<FieldKey, FieldValue>,
    /// SHA-256 of the canonicalized source document.
    pub checksum: String,
}

impl ArtifactDoc {
    pub fn new(doc_kind: DocKind, version: impl Into<String>) -> Self {
        let mut doc = ArtifactDoc {
            doc_kind,
            version: version.into(),
            values: BTreeMap::new(),
            checksum: String::new(),
        };
        doc.refresh_checksum();
        doc
    }

    pub fn get(&self, section: SectionId, field_id: &str) -> Option<&FieldValue> {
        self.values.get(&FieldKey::new(section, field_id))
    }

    pub fn set(&mut self, section: SectionId, field_id: &str, value: FieldValue) {
        self.values.insert(FieldKey::new(section, field_id), value);
        self.refresh_checksum();
    }

    pub fn remove(&mut self, section: SectionId, field_id: &str) -> Option<FieldValue> {
        let v = self.values.remove(&FieldKey::new(section, field_id));
        self.refresh_checksum();
        v
    }

    /// `{doc_kind, version, sections: {section: {field: {content, version_stamp}}}}`
    pub fn to_value(&self) -> Value {
        let mut sections: Map<String, Value> = Map::new();
        for (key, v) in &self.values {
            let entry = sections
                .entry(key.section.as_str().to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            entry
                .as_object_mut()
                .expect("section is an object")
                .insert(key.field_id.clone(), serde_json::to_value(v).expect("field value serializes"));
        }
        serde_json::json!({
            "doc_kind": self.doc_kind,
            "version": self.version,
            "sections": sections,
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("doc serializes") + "\n"
    }

    fn refresh_checksum(&mut self) {
        self.checksum = sha256_hex(canonical_json(&self.to_value()).as_bytes());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum DocWarning {
    UnknownSection { section: String },
    UnknownField { section: String, field: String },
    InvalidChoice { field: String, value: String },
}

impl fmt::Display for DocWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DocWarning::UnknownSection { section } => write!(f, "unknown section `{section}` ignored"),
            DocWarning::UnknownField { section, field } => write!(f, "unknown field `{section}.{field}` ignored"),
            DocWarning::InvalidChoice { field, value } => write!(f, "field `{field}`: `{value}` is not an allowed choice"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDoc {
    pub doc: ArtifactDoc,
    pub warnings: Vec<DocWarning>,
}

pub fn parse_doc(path: impl AsRef<Path>, schema: &Schema) -> Result<ParsedDoc> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_doc_str(&text, schema).map_err(|e| match e {
        Error::Syntax { line, column, message, .. } => Error::Syntax {
            path: path.to_path_buf(),
            line,
            column,
            message,
        },
        other => other,
    })
}

fn type_name(v: &Value) -> String {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
    .to_string()
}

/// Parses a document against `schema`. Unknown sections and fields become
/// warnings; a content value of the wrong JSON type is an error.
pub fn parse_doc_str(text: &str, schema: &Schema) -> Result<ParsedDoc> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::json("<document>", e))?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::Schema("document must be a JSON object".into()))?;
    let kind: DocKind = obj
        .get("doc_kind")
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| Error::Schema(format!("doc_kind: {e}")))?
        .ok_or_else(|| Error::Schema("missing doc_kind".into()))?;
    if kind != schema.doc_kind {
        return Err(Error::Schema(format!("document is a {kind}, schema is for a {}", schema.doc_kind)));
    }
    let version = match obj.get("version") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(Error::Schema("missing version".into())),
    };

    let mut warnings = Vec::new();
    let mut values = BTreeMap::new();
    let empty = Map::new();
    let sections = match obj.get("sections") {
        None | Some(Value::Null) => &empty,
        Some(Value::Object(m)) => m,
        Some(other) => return Err(Error::Schema(format!("sections must be an object, found {}", type_name(other)))),
    };
    for (sec_name, fields) in sections {
        let Some(section) = SectionId::parse(sec_name).filter(|s| s.kind() == kind) else {
            warnings.push(DocWarning::UnknownSection { section: sec_name.clone() });
            continue;
        };
        let Value::Object(fields) = fields else {
            return Err(Error::Schema(format!("section `{sec_name}` must be an object")));
        };
        for (field_id, raw) in fields {
            let Some(spec) = schema.field(section, field_id) else {
                warnings.push(DocWarning::UnknownField {
                    section: sec_name.clone(),
                    field: field_id.clone(),
                });
                continue;
            };
            let value: FieldValue = match raw {
                Value::Object(_) => serde_json::from_value(raw.clone()).map_err(|_| Error::ValueKind {
                    section: sec_name.clone(),
                    field: field_id.clone(),
                    expected: "{content, version_stamp}",
                    found: "malformed object".into(),
                })?,
                other => {
                    return Err(Error::ValueKind {
                        section: sec_name.clone(),
                        field: field_id.clone(),
                        expected: "{content, version_stamp}",
                        found: type_name(other),
                    })
                }
            };
            let expected = match spec.value_kind {
                ValueKind::Text | ValueKind::Reference | ValueKind::EnumChoice => "string",
                ValueKind::Number => "number",
                ValueKind::Boolean => "boolean",
            };
            let ok = matches!(
                (spec.value_kind, &value.content),
                (_, Value::Null)
                    | (ValueKind::Text | ValueKind::Reference | ValueKind::EnumChoice, Value::String(_))
                    | (ValueKind::Number, Value::Number(_))
                    | (ValueKind::Boolean, Value::Bool(_))
            );
            if !ok {
                return Err(Error::ValueKind {
                    section: sec_name.clone(),
                    field: field_id.clone(),
                    expected,
                    found: type_name(&value.content),
                });
            }
            if let (ValueKind::EnumChoice, Value::String(s)) = (spec.value_kind, &value.content) {
                if !s.is_empty() && !spec.choices.contains(s) {
                    warnings.push(DocWarning::InvalidChoice {
                        field: format!("{sec_name}.{field_id}"),
                        value: s.clone(),
                    });
                }
            }
            values.insert(FieldKey::new(section, field_id.clone()), value);
        }
    }
    Ok(ParsedDoc {
        doc: ArtifactDoc {
            doc_kind: kind,
            version,
            values,
            checksum: sha256_hex(canonical_json(&root).as_bytes()),
        },
        warnings,
    })
}
