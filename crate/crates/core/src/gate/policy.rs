use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::canonical_hash;
use crate::error::{Error, Result};

pub const DEFAULT_POLICY_JSON: &str = include_str!("../../assets/gate_policy_v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Blocking,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ceiling {
    pub threshold: f64,
    pub max_rate: f64,
}

/// One gate check and its parameters. The tag is the check id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check_id", rename_all = "snake_case")]
pub enum CheckSpec {
    /// Mandatory-field completeness of datasheet and card.
    DocCompleteness { min_completeness: f64 },
    /// De-identification disclosure fields plus a manual-review sampling plan.
    DeidDisclosure {
        fields: Vec<String>,
        require_sampling_plan: bool,
    },
    /// No patient in more than one split.
    PatientSplit,
    /// Leakage rate at each threshold within its ceiling.
    LeakageCeiling { ceilings: Vec<Ceiling> },
    /// Agreement statistics present whenever a labeling activity exists.
    AgreementReported,
    /// Drift and monitoring plan fields, optionally a recorded drift trace.
    DriftPlan { fields: Vec<String>, require_trace: bool },
    /// Provenance bundle valid and entity hashes match the released files.
    ProvenanceHashes,
    /// Release checksum manifest covers every file and matches.
    ReleaseChecksums { require_signature: bool },
}

impl CheckSpec {
    pub fn id(&self) -> &'static str {
        match self {
            CheckSpec::DocCompleteness { .. } => "doc_completeness",
            CheckSpec::DeidDisclosure { .. } => "deid_disclosure",
            CheckSpec::PatientSplit => "patient_split",
            CheckSpec::LeakageCeiling { .. } => "leakage_ceiling",
            CheckSpec::AgreementReported => "agreement_reported",
            CheckSpec::DriftPlan { .. } => "drift_plan",
            CheckSpec::ProvenanceHashes => "provenance_hashes",
            CheckSpec::ReleaseChecksums { .. } => "release_checksums",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateCheck {
    #[serde(flatten)]
    pub spec: CheckSpec,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PolicyFile {
    policy_version: String,
    #[serde(default)]
    notes: String,
    checks: Vec<GateCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatePolicy {
    pub policy_version: String,
    pub notes: String,
    pub checks: Vec<GateCheck>,
    policy_hash: String,
}

impl GatePolicy {
    pub fn new(policy_version: impl Into<String>, notes: impl Into<String>, checks: Vec<GateCheck>) -> Result<Self> {
        let file = PolicyFile {
            policy_version: policy_version.into(),
            notes: notes.into(),
            checks,
        };
        let mut seen = BTreeSet::new();
        for c in &file.checks {
            if !seen.insert(c.spec.id()) {
                return Err(Error::Policy(format!("duplicate check `{}`", c.spec.id())));
            }
            if let CheckSpec::LeakageCeiling { ceilings } = &c.spec {
                if ceilings.iter().any(|x| !(x.threshold > 0.0 && x.threshold <= 1.0)) {
                    return Err(Error::Policy("leakage ceiling thresholds must lie in (0, 1]".into()));
                }
            }
            if let CheckSpec::DeidDisclosure { fields, .. } | CheckSpec::DriftPlan { fields, .. } = &c.spec {
                if let Some(f) = fields.iter().find(|f| f.split_once('.').is_none()) {
                    return Err(Error::Policy(format!("field `{f}` must be `section.field`")));
                }
            }
        }
        let policy_hash = canonical_hash(&file);
        Ok(GatePolicy {
            policy_version: file.policy_version,
            notes: file.notes,
            checks: file.checks,
            policy_hash,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: PolicyFile = serde_json::from_str(text).map_err(|e| Error::Policy(e.to_string()))?;
        GatePolicy::new(f.policy_version, f.notes, f.checks)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GatePolicy::from_json(&text)
    }

    /// The shipped policy.
    pub fn default_policy() -> Self {
        GatePolicy::from_json(DEFAULT_POLICY_JSON).expect("shipped policy is valid")
    }

    /// Hash of the canonical policy document.
    pub fn policy_hash(&self) -> &str {
        &self.policy_hash
    }

    pub fn check(&self, id: &str) -> Option<&GateCheck> {
        self.checks.iter().find(|c| c.spec.id() == id)
    }

    pub fn to_json_pretty(&self) -> String {
        let f = PolicyFile {
            policy_version: self.policy_version.clone(),
            notes: self.notes.clone(),
            checks: self.checks.clone(),
        };
        serde_json::to_string_pretty(&f).expect("policy serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_policy() {
        let p = GatePolicy::default_policy();
        assert_eq!(p.checks.len(), 8);
        assert!(p.checks.iter().all(|c| c.severity == Severity::Blocking));
        let Some(GateCheck {
            spec: CheckSpec::LeakageCeiling { ceilings },
            ..
        }) = p.check("leakage_ceiling")
        else {
            panic!("missing leakage check")
        };
        assert_eq!(ceilings[1], Ceiling { threshold: 0.85, max_rate: 0.005 });
    }

    #[test]
    fn hash_tracks_content() {
        let p = GatePolicy::default_policy();
        let again = GatePolicy::from_json(&p.to_json_pretty()).unwrap();
        assert_eq!(p.policy_hash(), again.policy_hash());
        let mut checks = p.checks.clone();
        checks.pop();
        let q = GatePolicy::new(p.policy_version.clone(), p.notes.clone(), checks).unwrap();
        assert_ne!(p.policy_hash(), q.policy_hash());
    }

    #[test]
    fn duplicate_check_rejected() {
        let c = GateCheck {
            spec: CheckSpec::PatientSplit,
            severity: Severity::Blocking,
        };
        assert!(matches!(GatePolicy::new("v", "", vec![c.clone(), c]), Err(Error::Policy(_))));
    }
}
