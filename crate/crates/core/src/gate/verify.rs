use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bundle::*;
use super::suite::{compute_metrics, MetricInputs, MetricsReport};
use crate::corpus::{load_corpus, load_split};
use crate::metrics::{Annotations, PatternSet};
use crate::provenance::{load_bundle_lenient, verify_hashes, IntegrityStatus};
use crate::schema::{parse_doc, Schema};

/// Relative tolerance for recomputed PSI and kappa point values.
pub const FLOAT_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    MissingComponent,
    SchemaError,
    /// Informational; does not make the release inconsistent.
    SchemaWarning,
    ProvenanceViolation,
    StaleEntity,
    ChecksumIssue,
    MetricMismatch,
    RecomputeFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub subject: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub consistent: bool,
    pub findings: Vec<Finding>,
}

impl VerificationReport {
    pub fn of_kind(&self, kind: FindingKind) -> Vec<&Finding> {
        self.findings.iter().filter(|f| f.kind == kind).collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn render_text(&self) -> String {
        let mut s = format!("release: {}\n", if self.consistent { "consistent" } else { "INCONSISTENT" });
        for f in &self.findings {
            s.push_str(&format!("  {:?} {}: {}\n", f.kind, f.subject, f.detail));
        }
        s
    }
}

struct Findings(Vec<Finding>);

impl Findings {
    fn push(&mut self, kind: FindingKind, subject: impl Into<String>, detail: impl Into<String>) {
        self.0.push(Finding {
            kind,
            subject: subject.into(),
            detail: detail.into(),
        });
    }

    fn exact<T: PartialEq + std::fmt::Debug>(&mut self, subject: &str, recorded: &T, recomputed: &T) {
        if recorded != recomputed {
            self.push(
                FindingKind::MetricMismatch,
                subject,
                format!("recorded {recorded:?}, recomputed {recomputed:?}"),
            );
        }
    }

    fn close(&mut self, subject: &str, recorded: f64, recomputed: f64) {
        let ok = recorded == recomputed || (recorded - recomputed).abs() <= FLOAT_RTOL * recorded.abs().max(recomputed.abs());
        if !ok {
            self.push(
                FindingKind::MetricMismatch,
                subject,
                format!("recorded {recorded}, recomputed {recomputed}"),
            );
        }
    }

    fn bits(&mut self, subject: &str, recorded: f64, recomputed: f64) {
        if recorded.to_bits() != recomputed.to_bits() {
            self.push(
                FindingKind::MetricMismatch,
                subject,
                format!("recorded {recorded}, reproduced {recomputed} from recorded seed and B"),
            );
        }
    }
}

fn compare(f: &mut Findings, rec: &MetricsReport, new: &MetricsReport) {
    match (&rec.completeness, &new.completeness) {
        (Some(_), Some(_)) | (None, None) => {}
        _ => f.push(FindingKind::MetricMismatch, "completeness", "recorded and recomputed disagree on presence"),
    }
    let pairs = rec.completeness.as_ref().zip(new.completeness.as_ref()).map(|(r, n)| {
        [
            ("completeness.datasheet", &r.datasheet, &n.datasheet),
            ("completeness.card", &r.card, &n.card),
        ]
    });
    for (name, a, b) in pairs.into_iter().flatten() {
        f.exact(&format!("{name}.populated"), &(a.populated, a.total), &(b.populated, b.total));
        f.exact(&format!("{name}.missing"), &a.missing_mandatory, &b.missing_mandatory);
        f.exact(&format!("{name}.doc_checksum"), &a.doc_checksum, &b.doc_checksum);
    }

    f.exact("n_notes", &rec.n_notes, &new.n_notes);
    let counts = |p: &crate::metrics::MissingnessProfile| {
        p.per_field.iter().map(|x| (x.field, x.missing, x.n)).collect::<Vec<_>>()
    };
    f.exact("missingness", &counts(&rec.missingness), &counts(&new.missingness));
    let strata = |p: &crate::metrics::MissingnessProfile| {
        p.strata.as_ref().map(|s| {
            s.iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|x| (x.field, x.missing, x.n)).collect::<Vec<_>>()))
                .collect::<Vec<_>>()
        })
    };
    f.exact("missingness.strata", &strata(&rec.missingness), &strata(&new.missingness));

    f.exact("leakage.overlap", &rec.leakage.overlap, &new.leakage.overlap);
    let (rc, nc) = (&rec.leakage.curve, &new.leakage.curve);
    f.exact("leakage.n_test", &rc.n_test, &nc.n_test);
    let pts = |c: &crate::leakage::LeakCurve| {
        c.points
            .iter()
            .map(|p| {
                let ids: Vec<(String, String)> =
                    p.offenders.iter().map(|o| (o.test_note_id.clone(), o.train_note_id.clone())).collect();
                (p.threshold.to_bits(), p.count, ids)
            })
            .collect::<Vec<_>>()
    };
    f.exact("leakage.curve", &pts(rc), &pts(nc));

    if rec.agreement.len() != new.agreement.len() {
        f.push(
            FindingKind::MetricMismatch,
            "agreement",
            format!("recorded {} results, recomputed {}", rec.agreement.len(), new.agreement.len()),
        );
    } else {
        for (i, (a, b)) in rec.agreement.iter().zip(&new.agreement).enumerate() {
            f.close(&format!("agreement[{i}].value"), a.value, b.value);
            f.exact(&format!("agreement[{i}].n"), &(a.n_items, a.n_raters, a.bootstrap_b, a.seed), &(b.n_items, b.n_raters, b.bootstrap_b, b.seed));
            f.bits(&format!("agreement[{i}].ci_low"), a.ci_low, b.ci_low);
            f.bits(&format!("agreement[{i}].ci_high"), a.ci_high, b.ci_high);
        }
    }

    match (&rec.drift, &new.drift) {
        (Some(a), Some(b)) if a.points.len() == b.points.len() => {
            for (p, q) in a.points.iter().zip(&b.points) {
                f.exact(&format!("drift[{}].histogram", p.period), &p.histogram, &q.histogram);
                f.close(&format!("drift[{}].psi", p.period), p.psi, q.psi);
            }
        }
        (None, None) => {}
        (a, b) => f.push(
            FindingKind::MetricMismatch,
            "drift",
            format!(
                "recorded {} points, recomputed {}",
                a.as_ref().map_or(0, |t| t.points.len()),
                b.as_ref().map_or(0, |t| t.points.len())
            ),
        ),
    }

    f.exact("phi.pattern_hash", &rec.phi.pattern_hash, &new.phi.pattern_hash);
    f.exact("phi.per_note", &rec.phi.per_note, &new.phi.per_note);
    f.exact("phi.sampling_plan", &rec.phi.sampling_plan, &new.phi.sampling_plan);
}

/// Recomputes metrics from the bundled inputs, checks document schema
/// conformance, provenance hashes and the release manifest. Never fails;
/// every problem becomes a finding.
pub fn verify_bundle(root: impl AsRef<Path>) -> VerificationReport {
    let root = root.as_ref();
    let mut f = Findings(Vec::new());
    for dir in BUNDLE_DIRS {
        if !root.join(dir).is_dir() {
            f.push(FindingKind::MissingComponent, dir, "directory missing");
        }
    }

    let ds = parse_doc(root.join(DATASHEET_FILE), &Schema::datasheet());
    let card = parse_doc(root.join(CARD_FILE), &Schema::card());
    for (name, doc) in [(DATASHEET_FILE, &ds), (CARD_FILE, &card)] {
        match doc {
            Ok(p) => {
                for w in &p.warnings {
                    f.push(FindingKind::SchemaWarning, name, w.to_string());
                }
            }
            Err(e) => f.push(FindingKind::SchemaError, name, e.to_string()),
        }
    }

    match load_bundle_lenient(root.join(PROVENANCE_DIR)) {
        Ok((bundle, violations)) => {
            for v in violations {
                f.push(FindingKind::ProvenanceViolation, PROVENANCE_DIR, v.to_string());
            }
            for e in verify_hashes(&bundle, root).entries {
                match e.status {
                    IntegrityStatus::Mismatch { computed } => f.push(
                        FindingKind::StaleEntity,
                        e.entity_id,
                        format!(
                            "{} changed: recorded {}, file {}",
                            e.path.unwrap_or_default(),
                            e.expected,
                            computed
                        ),
                    ),
                    IntegrityStatus::Unreadable { message } => f.push(FindingKind::StaleEntity, e.entity_id, message),
                    IntegrityStatus::Match | IntegrityStatus::Absent { .. } => {}
                }
            }
        }
        Err(e) => f.push(FindingKind::ProvenanceViolation, PROVENANCE_DIR, e.to_string()),
    }

    match check_release(root, false) {
        Ok((_, issues)) => {
            for i in issues {
                f.push(FindingKind::ChecksumIssue, CHECKSUMS_FILE, format!("{i:?}"));
            }
        }
        Err(e) => f.push(FindingKind::ChecksumIssue, CHECKSUMS_FILE, e.to_string()),
    }

    let recompute = || -> crate::Result<(MetricsReport, MetricsReport)> {
        let recorded = MetricsReport::load(root.join(REPORT_FILE))?;
        let corpus = load_corpus(root.join(CORPUS_FILE))?;
        let split = load_split(root.join(SPLIT_FILE), &corpus)?;
        let patterns = PatternSet::load(root.join(PATTERNS_FILE))?;
        let ann_path = root.join(ANNOTATIONS_FILE);
        let annotations = if ann_path.exists() {
            let text = fs::read_to_string(&ann_path).map_err(|e| crate::Error::io(&ann_path, e))?;
            Some(serde_json::from_str::<Annotations>(&text).map_err(|e| crate::Error::json(&ann_path, e))?)
        } else {
            None
        };
        let inputs = MetricInputs {
            corpus,
            split,
            patterns,
            annotations,
            datasheet: Some(ds.as_ref().map_err(|e| crate::Error::Schema(e.to_string()))?.doc.clone()),
            card: Some(card.as_ref().map_err(|e| crate::Error::Schema(e.to_string()))?.doc.clone()),
        };
        let fresh = compute_metrics(&inputs, &recorded.settings)?;
        Ok((recorded, fresh))
    };
    match recompute() {
        Ok((recorded, fresh)) => compare(&mut f, &recorded, &fresh),
        Err(e) => f.push(FindingKind::RecomputeFailed, REPORT_FILE, e.to_string()),
    }

    let consistent = f.0.iter().all(|x| x.kind == FindingKind::SchemaWarning);
    VerificationReport {
        consistent,
        findings: f.0,
    }
}
