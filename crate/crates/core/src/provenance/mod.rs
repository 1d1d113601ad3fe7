//! PROV-style lifecycle graph: hashed entities, typed activities, agents and
//! `used` / `wasGeneratedBy` edges.
//!
//! On disk a bundle is a `provenance/` directory holding `entities.json`,
//! `activities.json`, `agents.json`, `edges.json` and `checksums.json`
//! (SHA-256 of the other four files). Loading validates the whole graph and
//! collects every violation rather than stopping at the first.

mod builder;
mod events;
mod graph;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Component, Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::digest::{sha256_file, sha256_hex};
use crate::error::{Error, Result};

pub use builder::BundleBuilder;
pub use events::{exemplar_fields, is_present, missing_minimal_fields, EventType, EVENT_SCHEMA_JSON};
pub use graph::{diff_versions, lineage, EntityChange, FieldChange, Lineage, LineageStep, ProvDiff};

pub const ENTITIES_FILE: &str = "entities.json";
pub const ACTIVITIES_FILE: &str = "activities.json";
pub const AGENTS_FILE: &str = "agents.json";
pub const EDGES_FILE: &str = "edges.json";
pub const CHECKSUMS_FILE: &str = "checksums.json";

const GRAPH_FILES: [&str; 4] = [ENTITIES_FILE, ACTIVITIES_FILE, AGENTS_FILE, EDGES_FILE];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Data,
    Code,
    Model,
    Document,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvEntity {
    pub entity_id: String,
    pub layer: Layer,
    /// Lowercase hex SHA-256 of the artifact bytes.
    pub hash: String,
    pub version_label: String,
    /// Artifact location relative to the artifact root, when released.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvActivity {
    pub activity_id: String,
    pub event_type: EventType,
    /// RFC 3339.
    pub timestamp: String,
    pub agent_id: String,
    #[serde(default)]
    pub fields: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agent {
    pub agent_id: String,
    /// e.g. `person`, `software`, `organization`.
    pub kind: String,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    #[serde(rename = "used")]
    Used,
    #[serde(rename = "wasGeneratedBy")]
    WasGeneratedBy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvEdge {
    pub kind: EdgeKind,
    pub activity_id: String,
    pub entity_id: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProvBundle {
    pub entities: Vec<ProvEntity>,
    pub activities: Vec<ProvActivity>,
    pub agents: Vec<Agent>,
    pub edges: Vec<ProvEdge>,
    /// Graph file name to SHA-256, as recorded in `checksums.json`.
    pub checksums: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    UnparseableFile { file: String, message: String },
    ChecksumMismatch { file: String, expected: String, computed: String },
    DuplicateId { kind: String, id: String },
    EmptyHash { entity_id: String },
    DanglingEdge { kind: EdgeKind, activity_id: String, entity_id: String, missing: String },
    MultipleGenerators { entity_id: String, activities: Vec<String> },
    MissingMinimalField { activity_id: String, event_type: EventType, field: String },
    UnknownAgent { activity_id: String, agent_id: String },
    BadTimestamp { activity_id: String, value: String },
    Cycle { nodes: Vec<String> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnparseableFile { file, message } => write!(f, "{file}: {message}"),
            Violation::ChecksumMismatch { file, expected, computed } => {
                write!(f, "{file}: checksum {computed} does not match recorded {expected}")
            }
            Violation::DuplicateId { kind, id } => write!(f, "duplicate {kind} id `{id}`"),
            Violation::EmptyHash { entity_id } => write!(f, "entity `{entity_id}` has no hash"),
            Violation::DanglingEdge { kind, activity_id, entity_id, missing } => {
                write!(f, "{kind:?} edge {activity_id} -> {entity_id} references unknown {missing}")
            }
            Violation::MultipleGenerators { entity_id, activities } => {
                write!(f, "entity `{entity_id}` generated by {}", activities.join(", "))
            }
            Violation::MissingMinimalField { activity_id, event_type, field } => {
                write!(f, "{event_type} activity `{activity_id}` lacks minimal field `{field}`")
            }
            Violation::UnknownAgent { activity_id, agent_id } => {
                write!(f, "activity `{activity_id}` references unknown agent `{agent_id}`")
            }
            Violation::BadTimestamp { activity_id, value } => {
                write!(f, "activity `{activity_id}` has unparseable timestamp `{value}`")
            }
            Violation::Cycle { nodes } => write!(f, "cycle through {}", nodes.join(" -> ")),
        }
    }
}

impl ProvBundle {
    pub fn entity(&self, id: &str) -> Option<&ProvEntity> {
        self.entities.iter().find(|e| e.entity_id == id)
    }

    pub fn activity(&self, id: &str) -> Option<&ProvActivity> {
        self.activities.iter().find(|a| a.activity_id == id)
    }

    /// Activity that generated `entity_id`, if any.
    pub fn generator(&self, entity_id: &str) -> Option<&ProvActivity> {
        self.edges
            .iter()
            .find(|e| e.kind == EdgeKind::WasGeneratedBy && e.entity_id == entity_id)
            .and_then(|e| self.activity(&e.activity_id))
    }

    /// Entities used by `activity_id`, sorted by id.
    pub fn used_by(&self, activity_id: &str) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Used && e.activity_id == activity_id)
            .map(|e| e.entity_id.as_str())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Entities generated by `activity_id`, sorted by id.
    pub fn generated_by(&self, activity_id: &str) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::WasGeneratedBy && e.activity_id == activity_id)
            .map(|e| e.entity_id.as_str())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Every structural violation in the graph.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for e in &self.entities {
            if !seen.insert(e.entity_id.as_str()) {
                out.push(Violation::DuplicateId { kind: "entity".into(), id: e.entity_id.clone() });
            }
            if e.hash.trim().is_empty() {
                out.push(Violation::EmptyHash { entity_id: e.entity_id.clone() });
            }
        }
        let mut seen = BTreeSet::new();
        for a in &self.activities {
            if !seen.insert(a.activity_id.as_str()) {
                out.push(Violation::DuplicateId { kind: "activity".into(), id: a.activity_id.clone() });
            }
        }
        let agents: BTreeSet<&str> = self.agents.iter().map(|a| a.agent_id.as_str()).collect();
        if agents.len() != self.agents.len() {
            let mut seen = BTreeSet::new();
            for a in &self.agents {
                if !seen.insert(a.agent_id.as_str()) {
                    out.push(Violation::DuplicateId { kind: "agent".into(), id: a.agent_id.clone() });
                }
            }
        }
        for a in &self.activities {
            for field in missing_minimal_fields(a) {
                out.push(Violation::MissingMinimalField {
                    activity_id: a.activity_id.clone(),
                    event_type: a.event_type,
                    field: field.to_string(),
                });
            }
            if !agents.contains(a.agent_id.as_str()) {
                out.push(Violation::UnknownAgent {
                    activity_id: a.activity_id.clone(),
                    agent_id: a.agent_id.clone(),
                });
            }
            if chrono::DateTime::parse_from_rfc3339(&a.timestamp).is_err() {
                out.push(Violation::BadTimestamp {
                    activity_id: a.activity_id.clone(),
                    value: a.timestamp.clone(),
                });
            }
        }

        let entity_ids: BTreeSet<&str> = self.entities.iter().map(|e| e.entity_id.as_str()).collect();
        let activity_ids: BTreeSet<&str> = self.activities.iter().map(|a| a.activity_id.as_str()).collect();
        let mut generators: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        let mut dangling = false;
        for e in &self.edges {
            let missing_entity = !entity_ids.contains(e.entity_id.as_str());
            let missing_activity = !activity_ids.contains(e.activity_id.as_str());
            if missing_entity || missing_activity {
                dangling = true;
                out.push(Violation::DanglingEdge {
                    kind: e.kind,
                    activity_id: e.activity_id.clone(),
                    entity_id: e.entity_id.clone(),
                    missing: if missing_entity {
                        format!("entity `{}`", e.entity_id)
                    } else {
                        format!("activity `{}`", e.activity_id)
                    },
                });
            }
            if e.kind == EdgeKind::WasGeneratedBy {
                generators.entry(e.entity_id.as_str()).or_default().insert(e.activity_id.as_str());
            }
        }
        for (entity, acts) in &generators {
            if acts.len() > 1 {
                out.push(Violation::MultipleGenerators {
                    entity_id: entity.to_string(),
                    activities: acts.iter().map(|s| s.to_string()).collect(),
                });
            }
        }
        if !dangling {
            if let Some(nodes) = graph::find_cycle(self) {
                out.push(Violation::Cycle { nodes });
            }
        }
        out
    }

    /// Writes the four graph files plus `checksums.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let docs = [
            (ENTITIES_FILE, serde_json::to_string_pretty(&self.entities)),
            (ACTIVITIES_FILE, serde_json::to_string_pretty(&self.activities)),
            (AGENTS_FILE, serde_json::to_string_pretty(&self.agents)),
            (EDGES_FILE, serde_json::to_string_pretty(&self.edges)),
        ];
        let mut checksums = BTreeMap::new();
        for (name, body) in docs {
            let body = body.expect("bundle serializes") + "\n";
            checksums.insert(name.to_string(), sha256_hex(body.as_bytes()));
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join(CHECKSUMS_FILE);
        let body = serde_json::to_string_pretty(&checksums).expect("map serializes") + "\n";
        fs::write(&path, body).map_err(|e| Error::io(&path, e))
    }
}

fn read_list<T: serde::de::DeserializeOwned>(dir: &Path, name: &str, violations: &mut Vec<Violation>) -> Vec<T> {
    let path = dir.join(name);
    match fs::read_to_string(&path) {
        Ok(text) => match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => {
                violations.push(Violation::UnparseableFile { file: name.into(), message: e.to_string() });
                Vec::new()
            }
        },
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => {
            violations.push(Violation::UnparseableFile { file: name.into(), message: e.to_string() });
            Vec::new()
        }
    }
}

/// Reads and validates a bundle directory. Absent graph files count as empty
/// lists; every violation found is returned together in
/// [`Error::Provenance`].
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<ProvBundle> {
    let (bundle, violations) = load_bundle_lenient(dir)?;
    if violations.is_empty() {
        Ok(bundle)
    } else {
        Err(Error::Provenance(violations))
    }
}

/// Like [`load_bundle`] but returns whatever parsed alongside the violations.
pub fn load_bundle_lenient(dir: impl AsRef<Path>) -> Result<(ProvBundle, Vec<Violation>)> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory")));
    }
    let mut violations = Vec::new();
    let checksums: BTreeMap<String, String> = {
        let path = dir.join(CHECKSUMS_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_else(|e| {
                violations.push(Violation::UnparseableFile { file: CHECKSUMS_FILE.into(), message: e.to_string() });
                BTreeMap::new()
            }),
            Err(_) => BTreeMap::new(),
        }
    };
    for (file, expected) in &checksums {
        let path = dir.join(file);
        let computed = sha256_file(&path).unwrap_or_else(|e| format!("<unreadable: {e}>"));
        if &computed != expected {
            violations.push(Violation::ChecksumMismatch {
                file: file.clone(),
                expected: expected.clone(),
                computed,
            });
        }
    }
    let bundle = ProvBundle {
        entities: read_list(dir, ENTITIES_FILE, &mut violations),
        activities: read_list(dir, ACTIVITIES_FILE, &mut violations),
        agents: read_list(dir, AGENTS_FILE, &mut violations),
        edges: read_list(dir, EDGES_FILE, &mut violations),
        checksums,
    };
    violations.extend(bundle.validate());
    Ok((bundle, violations))
}

/// Names of the files a bundle directory is expected to hold.
pub fn bundle_files() -> impl Iterator<Item = &'static str> {
    GRAPH_FILES.into_iter().chain(std::iter::once(CHECKSUMS_FILE))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum IntegrityStatus {
    Match,
    Mismatch { computed: String },
    Absent { reason: String },
    Unreadable { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityEntry {
    pub entity_id: String,
    pub path: Option<String>,
    pub expected: String,
    #[serde(flatten)]
    pub status: IntegrityStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntegrityReport {
    /// One entry per entity, sorted by entity id.
    pub entries: Vec<IntegrityEntry>,
}

impl IntegrityReport {
    /// Fails on any mismatch or unreadable file; absent artifacts are allowed.
    pub fn passed(&self) -> bool {
        self.entries
            .iter()
            .all(|e| matches!(e.status, IntegrityStatus::Match | IntegrityStatus::Absent { .. }))
    }

    pub fn mismatches(&self) -> Vec<&IntegrityEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e.status, IntegrityStatus::Mismatch { .. }))
            .collect()
    }
}

/// Resolves `rel` under `root`, returning `None` if it escapes the root.
fn resolve_inside(root: &Path, rel: &str) -> Option<PathBuf> {
    let rel = Path::new(rel);
    if rel.is_absolute() || rel.components().any(|c| matches!(c, Component::ParentDir | Component::Prefix(_))) {
        return None;
    }
    let joined = root.join(rel);
    match (joined.canonicalize(), root.canonicalize()) {
        (Ok(full), Ok(base)) if !full.starts_with(&base) => None,
        _ => Some(joined),
    }
}

/// Recomputes SHA-256 for every entity with a released artifact under
/// `artifact_root` and compares it with the recorded hash.
pub fn verify_hashes(bundle: &ProvBundle, artifact_root: impl AsRef<Path>) -> IntegrityReport {
    let root = artifact_root.as_ref();
    let mut entries: Vec<IntegrityEntry> = bundle
        .entities
        .par_iter()
        .map(|e| {
            let status = match e.path.as_deref() {
                None => IntegrityStatus::Absent { reason: "no artifact path recorded".into() },
                Some(rel) => match resolve_inside(root, rel) {
                    None => IntegrityStatus::Absent { reason: "path outside artifact root".into() },
                    Some(p) if !p.exists() => IntegrityStatus::Absent { reason: "file not present".into() },
                    Some(p) => match sha256_file(&p) {
                        Ok(h) if h.eq_ignore_ascii_case(&e.hash) => IntegrityStatus::Match,
                        Ok(h) => IntegrityStatus::Mismatch { computed: h },
                        Err(err) => IntegrityStatus::Unreadable { message: err.to_string() },
                    },
                },
            };
            IntegrityEntry {
                entity_id: e.entity_id.clone(),
                path: e.path.clone(),
                expected: e.hash.clone(),
                status,
            }
        })
        .collect();
    entries.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
    IntegrityReport { entries }
}

/// Index from entity id to generating activity id.
pub(crate) fn generator_index(bundle: &ProvBundle) -> HashMap<&str, &str> {
    bundle
        .edges
        .iter()
        .filter(|e| e.kind == EdgeKind::WasGeneratedBy)
        .map(|e| (e.entity_id.as_str(), e.activity_id.as_str()))
        .collect()
}

#[cfg(test)]
mod tests;
