use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::bundle::*;
use super::policy::{CheckSpec, GateCheck, GatePolicy, Severity};
use super::suite::MetricsReport;
use crate::corpus::{load_corpus, load_split, Corpus, SplitManifest};
use crate::digest::canonical_hash;
use crate::error::Result;
use crate::leakage::{leak_curve, patient_overlap, SimilarityConfig};
use crate::provenance::{load_bundle_lenient, verify_hashes, EventType, ProvBundle, Violation};
use crate::schema::{parse_doc, DocKind, ParsedDoc, Schema, SectionId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check_id: String,
    pub severity: Severity,
    pub status: CheckStatus,
    pub summary: String,
    pub evidence: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub policy_version: String,
    pub policy_hash: String,
    /// SHA-256 of the main bundle inputs, `absent` when missing.
    pub inputs: BTreeMap<String, String>,
    /// In policy order.
    pub checks: Vec<CheckResult>,
    pub verdict: Verdict,
}

impl GateReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn failing_checks(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| c.check_id.as_str())
            .collect()
    }

    pub fn check(&self, id: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check_id == id)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let verdict = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        };
        let _ = writeln!(s, "gate: {verdict}");
        let _ = writeln!(s, "policy: {} ({})", self.policy_version, self.policy_hash);
        let width = self.checks.iter().map(|c| c.check_id.len()).max().unwrap_or(0);
        for c in &self.checks {
            let tag = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Warn => "warn",
            };
            let _ = writeln!(s, "  [{tag}] {:width$}  {}", c.check_id, c.summary);
        }
        s
    }
}

/// Bundle contents loaded once and shared by all checks. Load failures are
/// kept as messages so each check can report them.
struct Context {
    root: PathBuf,
    datasheet: std::result::Result<ParsedDoc, String>,
    card: std::result::Result<ParsedDoc, String>,
    report: std::result::Result<MetricsReport, String>,
    report_hash: String,
    corpus: std::result::Result<Corpus, String>,
    split: std::result::Result<SplitManifest, String>,
    provenance: std::result::Result<(ProvBundle, Vec<Violation>), String>,
}

impl Context {
    fn load(root: &Path) -> Self {
        let corpus = load_corpus(root.join(CORPUS_FILE)).map_err(|e| e.to_string());
        let split = match &corpus {
            Ok(c) => load_split(root.join(SPLIT_FILE), c).map_err(|e| e.to_string()),
            Err(_) => Err("corpus unavailable".to_string()),
        };
        Context {
            root: root.to_path_buf(),
            datasheet: parse_doc(root.join(DATASHEET_FILE), &Schema::datasheet()).map_err(|e| e.to_string()),
            card: parse_doc(root.join(CARD_FILE), &Schema::card()).map_err(|e| e.to_string()),
            report: MetricsReport::load(root.join(REPORT_FILE)).map_err(|e| e.to_string()),
            report_hash: file_hash(root, REPORT_FILE).unwrap_or_else(|| "absent".into()),
            corpus,
            split,
            provenance: load_bundle_lenient(root.join(PROVENANCE_DIR)).map_err(|e| e.to_string()),
        }
    }

    fn doc(&self, kind: DocKind) -> std::result::Result<&ParsedDoc, &str> {
        match kind {
            DocKind::Datasheet => self.datasheet.as_ref().map_err(String::as_str),
            DocKind::Card => self.card.as_ref().map_err(String::as_str),
        }
    }

    /// Fields from `section.field` names that are not populated.
    fn unpopulated(&self, fields: &[String]) -> Vec<String> {
        fields
            .iter()
            .filter(|name| {
                let Some((sec, field)) = name.split_once('.') else { return true };
                let Some(section) = SectionId::parse(sec) else { return true };
                let kind = section.kind();
                let schema = Schema::shipped(kind);
                let (Ok(doc), Some(spec)) = (self.doc(kind), schema.field(section, field)) else {
                    return true;
                };
                !doc.doc.get(section, field).is_some_and(|v| v.is_populated(spec))
            })
            .cloned()
            .collect()
    }
}

struct Outcome {
    ok: bool,
    summary: String,
    evidence: Value,
}

fn outcome(ok: bool, summary: impl Into<String>, evidence: Value) -> Outcome {
    Outcome {
        ok,
        summary: summary.into(),
        evidence,
    }
}

fn unavailable(what: &str, msg: &str) -> Outcome {
    outcome(false, format!("{what} unavailable: {msg}"), json!({ "error": msg }))
}

fn run(ctx: &Context, spec: &CheckSpec) -> Outcome {
    match spec {
        CheckSpec::DocCompleteness { min_completeness } => {
            let mut ok = true;
            let mut parts = Vec::new();
            let mut ev = serde_json::Map::new();
            for kind in [DocKind::Datasheet, DocKind::Card] {
                match ctx.doc(kind) {
                    Ok(p) => {
                        let r = crate::schema::completeness(&p.doc, &Schema::shipped(kind));
                        ok &= r.c >= *min_completeness;
                        parts.push(format!("{kind} C={}", r.c_display));
                        ev.insert(
                            kind.to_string(),
                            json!({
                                "c": r.c,
                                "populated": r.populated,
                                "total": r.total,
                                "missing": r.missing_mandatory.iter().map(ToString::to_string).collect::<Vec<_>>(),
                                "schema_hash": r.schema_hash,
                                "doc_checksum": r.doc_checksum,
                            }),
                        );
                    }
                    Err(e) => {
                        ok = false;
                        parts.push(format!("{kind} unreadable"));
                        ev.insert(kind.to_string(), json!({ "error": e }));
                    }
                }
            }
            outcome(ok, parts.join(", "), Value::Object(ev))
        }
        CheckSpec::DeidDisclosure {
            fields,
            require_sampling_plan,
        } => {
            let missing = ctx.unpopulated(fields);
            let plan = ctx.report.as_ref().ok().map(|r| &r.phi.sampling_plan);
            let plan_ok = !require_sampling_plan || plan.is_some_and(|p| p.sample_size > 0 && !p.note_ids.is_empty());
            let summary = match (missing.is_empty(), plan_ok) {
                (true, true) => "disclosure fields and review sample present".to_string(),
                (false, _) => format!("missing {}", missing.join(", ")),
                (true, false) => "no manual-review sampling plan".to_string(),
            };
            outcome(
                missing.is_empty() && plan_ok,
                summary,
                json!({
                    "missing_fields": missing,
                    "sample_size": plan.map(|p| p.sample_size),
                    "pattern_hash": ctx.report.as_ref().ok().map(|r| &r.phi.pattern_hash),
                    "metrics_report_sha256": ctx.report_hash,
                }),
            )
        }
        CheckSpec::PatientSplit => {
            let (corpus, split) = match (&ctx.corpus, &ctx.split) {
                (Ok(c), Ok(s)) => (c, s),
                (Err(e), _) | (_, Err(e)) => return unavailable("split", e),
            };
            let overlap = patient_overlap(corpus, split);
            let ids: Vec<&str> = overlap.patients.iter().map(|p| p.patient_id.as_str()).collect();
            outcome(
                overlap.is_clean(),
                if overlap.is_clean() {
                    format!("{} patients disjoint across splits", corpus.patient_ids().count())
                } else {
                    format!("{} patients in more than one split", ids.len())
                },
                json!({ "split_key": split.split_key, "overlapping_patients": ids }),
            )
        }
        CheckSpec::LeakageCeiling { ceilings } => {
            let (corpus, split) = match (&ctx.corpus, &ctx.split) {
                (Ok(c), Ok(s)) => (c, s),
                (Err(e), _) | (_, Err(e)) => return unavailable("split", e),
            };
            let method = ctx
                .report
                .as_ref()
                .map(|r| r.settings.similarity.method)
                .unwrap_or_default();
            let mut taus: Vec<f64> = ceilings.iter().map(|c| c.threshold).collect();
            taus.sort_by(f64::total_cmp);
            taus.dedup();
            let curve = match SimilarityConfig::new(method, taus).and_then(|cfg| leak_curve(corpus, split, &cfg)) {
                Ok(c) => c,
                Err(e) => return unavailable("leakage curve", &e.to_string()),
            };
            let mut ok = true;
            let mut rows = Vec::new();
            let mut parts = Vec::new();
            for c in ceilings {
                let p = curve
                    .points
                    .iter()
                    .find(|p| p.threshold == c.threshold)
                    .expect("curve has every ceiling threshold");
                let within = p.rate <= c.max_rate;
                ok &= within;
                parts.push(format!("L({:.2})={:.4}{}{:.4}", c.threshold, p.rate, if within { "<=" } else { ">" }, c.max_rate));
                rows.push(json!({
                    "threshold": c.threshold,
                    "rate": p.rate,
                    "count": p.count,
                    "max_rate": c.max_rate,
                }));
            }
            outcome(
                ok,
                parts.join(" "),
                json!({
                    "method": method.label(),
                    "n_test": curve.n_test,
                    "points": rows,
                    "metrics_report_sha256": ctx.report_hash,
                }),
            )
        }
        CheckSpec::AgreementReported => {
            let (prov, _) = match &ctx.provenance {
                Ok(p) => p,
                Err(e) => return unavailable("provenance", e),
            };
            let labeling: Vec<&str> = prov
                .activities
                .iter()
                .filter(|a| a.event_type == EventType::Labeling)
                .map(|a| a.activity_id.as_str())
                .collect();
            if labeling.is_empty() {
                return outcome(true, "no labeling activity", json!({ "labeling_activities": labeling }));
            }
            let report = match &ctx.report {
                Ok(r) => r,
                Err(e) => return unavailable("metrics report", e),
            };
            let stats: Vec<Value> = report
                .agreement
                .iter()
                .map(|a| json!({ "statistic": a.statistic, "value": a.value, "ci": [a.ci_low, a.ci_high], "n_items": a.n_items }))
                .collect();
            let ok = !report.agreement.is_empty()
                && report
                    .agreement
                    .iter()
                    .all(|a| a.value.is_finite() && a.ci_low.is_finite() && a.ci_high.is_finite());
            let summary = match report.agreement.first() {
                Some(a) if ok => format!("kappa={:.4} [{:.4}, {:.4}]", a.value, a.ci_low, a.ci_high),
                _ => format!("labeling activity {} has no agreement record", labeling.join(", ")),
            };
            outcome(
                ok,
                summary,
                json!({ "labeling_activities": labeling, "statistics": stats, "metrics_report_sha256": ctx.report_hash }),
            )
        }
        CheckSpec::DriftPlan { fields, require_trace } => {
            let missing = ctx.unpopulated(fields);
            let trace = ctx.report.as_ref().ok().and_then(|r| r.drift.as_ref());
            let trace_ok = !require_trace || trace.is_some_and(|t| !t.points.is_empty());
            let summary = match (missing.is_empty(), trace_ok) {
                (true, true) => "monitoring plan documented, drift trace recorded".to_string(),
                (false, _) => format!("missing {}", missing.join(", ")),
                (true, false) => "no drift trace in metrics report".to_string(),
            };
            outcome(
                missing.is_empty() && trace_ok,
                summary,
                json!({
                    "missing_fields": missing,
                    "trace_points": trace.map(|t| t.points.len()),
                    "metrics_report_sha256": ctx.report_hash,
                }),
            )
        }
        CheckSpec::ProvenanceHashes => {
            let (prov, violations) = match &ctx.provenance {
                Ok(p) => p,
                Err(e) => return unavailable("provenance", e),
            };
            let integrity = verify_hashes(prov, &ctx.root);
            let mismatched: Vec<&str> = integrity
                .entries
                .iter()
                .filter(|e| !matches!(e.status, crate::provenance::IntegrityStatus::Match | crate::provenance::IntegrityStatus::Absent { .. }))
                .map(|e| e.entity_id.as_str())
                .collect();
            let ok = violations.is_empty() && integrity.passed();
            let summary = if ok {
                let matched = integrity.entries.len() - integrity.entries.iter().filter(|e| matches!(e.status, crate::provenance::IntegrityStatus::Absent { .. })).count();
                format!("{} entities, {matched} artifact hashes match", prov.entities.len())
            } else if !mismatched.is_empty() {
                format!("hash mismatch for {}", mismatched.join(", "))
            } else {
                format!("{} graph violations", violations.len())
            };
            outcome(
                ok,
                summary,
                json!({
                    "violations": violations.iter().map(ToString::to_string).collect::<Vec<_>>(),
                    "mismatched_entities": mismatched,
                    "entities": integrity.entries.len(),
                }),
            )
        }
        CheckSpec::ReleaseChecksums { require_signature } => match check_release(&ctx.root, *require_signature) {
            Ok((manifest, issues)) => outcome(
                issues.is_empty(),
                if issues.is_empty() {
                    format!("{} files match manifest", manifest.map_or(0, |m| m.entries.len()))
                } else {
                    format!("{} checksum issues", issues.len())
                },
                json!({ "issues": issues, "manifest_sha256": file_hash(&ctx.root, CHECKSUMS_FILE) }),
            ),
            Err(e) => unavailable("release manifest", &e.to_string()),
        },
    }
}

fn input_hashes(root: &Path) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    for (k, rel) in [
        ("datasheet", DATASHEET_FILE),
        ("card", CARD_FILE),
        ("metrics_report", REPORT_FILE),
        ("corpus", CORPUS_FILE),
        ("split", SPLIT_FILE),
        ("release_manifest", CHECKSUMS_FILE),
    ] {
        m.insert(k.to_string(), file_hash(root, rel).unwrap_or_else(|| "absent".into()));
    }
    let prov: BTreeMap<&str, Option<String>> = crate::provenance::bundle_files()
        .map(|f| (f, file_hash(root, &format!("{PROVENANCE_DIR}/{f}"))))
        .collect();
    m.insert("provenance".to_string(), canonical_hash(&prov));
    m
}

/// Evaluates every policy check against the bundle at `root`. Checks run in
/// parallel; results keep policy order, so identical inputs give
/// byte-identical reports.
pub fn gate(root: impl AsRef<Path>, policy: &GatePolicy) -> Result<GateReport> {
    let root = root.as_ref();
    check_layout(root)?;
    let ctx = Context::load(root);
    let checks: Vec<CheckResult> = policy
        .checks
        .par_iter()
        .map(|GateCheck { spec, severity }| {
            let o = run(&ctx, spec);
            CheckResult {
                check_id: spec.id().to_string(),
                severity: *severity,
                status: match (o.ok, severity) {
                    (true, _) => CheckStatus::Pass,
                    (false, Severity::Blocking) => CheckStatus::Fail,
                    (false, Severity::Warning) => CheckStatus::Warn,
                },
                summary: o.summary,
                evidence: o.evidence,
            }
        })
        .collect();
    let verdict = if checks.iter().any(|c| c.status == CheckStatus::Fail) {
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    Ok(GateReport {
        policy_version: policy.policy_version.clone(),
        policy_hash: policy.policy_hash().to_string(),
        inputs: input_hashes(root),
        checks,
        verdict,
    })
}
