//! Train/test contamination: patient overlap and the similarity leakage curve.
//!
//! The curve is the test-side fraction `L(τ)` of test notes whose best match
//! among train notes scores at or above `τ`. Exact modes score every
//! test/train pair. MinHash mode buckets train signatures into LSH bands,
//! then re-scores each candidate with exact character n-gram Jaccard, so
//! every reported similarity is exact over the detected candidates.

mod similarity;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{Corpus, Split, SplitManifest};
use crate::dat::DatTable;
use crate::digest::canonical_hash;
use crate::error::{Error, Result};
use crate::provenance::{EventType, ProvActivity};

pub use similarity::{
    char_ngram_jaccard, char_ngrams, similarity, token_jaccard, tokenize, MinHasher, SimilarityConfig,
    SimilarityMethod, DEFAULT_BANDS, DEFAULT_MINHASH_K, DEFAULT_NGRAM, DEFAULT_ROWS, DEFAULT_THRESHOLDS,
};
pub(crate) use similarity::{fnv1a, shingle_hashes, sorted_jaccard};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapEntry {
    pub patient_id: String,
    pub splits: Vec<Split>,
    /// `(note_id, split)` sorted by note id.
    pub notes: Vec<(String, Split)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OverlapReport {
    pub patients: Vec<OverlapEntry>,
}

impl OverlapReport {
    pub fn is_clean(&self) -> bool {
        self.patients.is_empty()
    }
}

/// Patients whose notes appear in more than one split.
pub fn patient_overlap(corpus: &Corpus, split: &SplitManifest) -> OverlapReport {
    let mut by_patient: BTreeMap<&str, Vec<(String, Split)>> = BTreeMap::new();
    for (note_id, s) in &split.assignment {
        if let Some(note) = corpus.get(note_id) {
            by_patient
                .entry(note.patient_id.as_str())
                .or_default()
                .push((note_id.clone(), *s));
        }
    }
    let patients = by_patient
        .into_iter()
        .filter_map(|(p, notes)| {
            let splits: BTreeSet<Split> = notes.iter().map(|(_, s)| *s).collect();
            (splits.len() > 1).then(|| OverlapEntry {
                patient_id: p.to_string(),
                splits: splits.into_iter().collect(),
                notes,
            })
        })
        .collect();
    OverlapReport { patients }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub test_note_id: String,
    pub train_note_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakPoint {
    pub threshold: f64,
    /// Test notes at or above the threshold.
    pub count: usize,
    /// `count / n_test`.
    pub rate: f64,
    pub offenders: Vec<Offender>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakCurve {
    pub method: SimilarityMethod,
    pub n_test: usize,
    pub n_train: usize,
    pub points: Vec<LeakPoint>,
}

impl LeakCurve {
    pub fn rate_at(&self, threshold: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| (p.threshold - threshold).abs() < 1e-12)
            .map(|p| p.rate)
    }

    /// `threshold pct` table, percentages to two decimals.
    pub fn to_dat(&self) -> DatTable {
        let mut t = DatTable::new(["threshold", "pct"]);
        for p in &self.points {
            t.push([format!("{:.2}", p.threshold), format!("{:.2}", p.rate * 100.0)]);
        }
        t
    }
}

/// Best train match for one test note: highest similarity, ties to the
/// lexicographically smallest train note id. `train` must be sorted by id.
fn best_match<'a>(scores: impl Iterator<Item = (&'a str, f64)>) -> Option<(&'a str, f64)> {
    let mut best: Option<(&str, f64)> = None;
    for (id, s) in scores {
        match best {
            Some((bid, bs)) if s < bs || (s == bs && id >= bid) => {}
            _ => best = Some((id, s)),
        }
    }
    best
}

/// Leakage curve over the test partition of `split`.
pub fn leak_curve(corpus: &Corpus, split: &SplitManifest, cfg: &SimilarityConfig) -> Result<LeakCurve> {
    cfg.validate()?;
    let train_ids = split.members(Split::Train);
    let test_ids = split.members(Split::Test);
    if train_ids.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }
    if test_ids.is_empty() {
        return Err(Error::EmptyPartition("test"));
    }
    let text = |id: &str| corpus.get(id).map(|n| n.text.as_str()).ok_or_else(|| Error::UnknownNoteId(id.to_string()));
    let train_texts: Vec<&str> = train_ids.iter().map(|id| text(id)).collect::<Result<_>>()?;
    let test_texts: Vec<&str> = test_ids.iter().map(|id| text(id)).collect::<Result<_>>()?;

    let best: Vec<Option<(&str, f64)>> = match cfg.method {
        SimilarityMethod::TokenJaccard | SimilarityMethod::CharNgramJaccard { .. } => {
            let train_fp: Vec<Vec<u64>> = train_texts.par_iter().map(|t| shingle_hashes(t, &cfg.method)).collect();
            test_texts
                .par_iter()
                .map(|t| {
                    let fp = shingle_hashes(t, &cfg.method);
                    best_match(
                        train_ids
                            .iter()
                            .zip(&train_fp)
                            .map(|(id, tfp)| (*id, sorted_jaccard(&fp, tfp))),
                    )
                })
                .collect()
        }
        SimilarityMethod::MinhashEstimate { k, n, bands, rows } => {
            let exact = SimilarityMethod::CharNgramJaccard { n };
            let hasher = MinHasher::new(k, n);
            let train_fp: Vec<Vec<u64>> = train_texts.par_iter().map(|t| shingle_hashes(t, &exact)).collect();
            let mut buckets: HashMap<(usize, u64), Vec<usize>> = HashMap::new();
            for (i, fp) in train_fp.iter().enumerate() {
                let sig = hasher.signature_of(fp);
                for (b, key) in band_keys(&sig, bands, rows).into_iter().enumerate() {
                    buckets.entry((b, key)).or_default().push(i);
                }
            }
            test_texts
                .par_iter()
                .map(|t| {
                    let fp = shingle_hashes(t, &exact);
                    let sig = hasher.signature_of(&fp);
                    let mut cands: BTreeSet<usize> = BTreeSet::new();
                    for (b, key) in band_keys(&sig, bands, rows).into_iter().enumerate() {
                        if let Some(v) = buckets.get(&(b, key)) {
                            cands.extend(v.iter().copied());
                        }
                    }
                    best_match(cands.into_iter().map(|i| (train_ids[i], sorted_jaccard(&fp, &train_fp[i]))))
                })
                .collect()
        }
    };

    let n_test = test_ids.len();
    let points = cfg
        .thresholds
        .iter()
        .map(|&tau| {
            let offenders: Vec<Offender> = test_ids
                .iter()
                .zip(&best)
                .filter_map(|(tid, b)| match b {
                    Some((train, s)) if *s >= tau => Some(Offender {
                        test_note_id: tid.to_string(),
                        train_note_id: train.to_string(),
                        similarity: *s,
                    }),
                    _ => None,
                })
                .collect();
            LeakPoint {
                threshold: tau,
                count: offenders.len(),
                rate: offenders.len() as f64 / n_test as f64,
                offenders,
            }
        })
        .collect();
    Ok(LeakCurve {
        method: cfg.method,
        n_test,
        n_train: train_ids.len(),
        points,
    })
}

fn band_keys(sig: &[u64], bands: usize, rows: usize) -> Vec<u64> {
    (0..bands)
        .map(|b| {
            let mut bytes = Vec::with_capacity(rows * 8);
            for v in &sig[b * rows..(b + 1) * rows] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            fnv1a(&bytes)
        })
        .collect()
}

/// Author-declared disclosure for a leakage class that is not computed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Declaration {
    /// `true` if the author declares the risk has been checked and excluded.
    pub checked: bool,
    pub justification: String,
}

impl Declaration {
    pub fn is_complete(&self) -> bool {
        !self.justification.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Disclosures {
    pub label_leakage: Option<Declaration>,
    pub contamination: Option<Declaration>,
}

impl Disclosures {
    pub fn is_complete(&self) -> bool {
        [&self.label_leakage, &self.contamination]
            .iter()
            .all(|d| d.as_ref().is_some_and(Declaration::is_complete))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditStatus {
    Pass,
    /// Computed checks are clean but disclosures are missing.
    DisclosuresRequired,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageAuditRecord {
    pub split_key: crate::corpus::SplitKey,
    pub seed: u64,
    pub overlap: OverlapReport,
    pub curve: LeakCurve,
    pub disclosures: Disclosures,
    pub status: AuditStatus,
    pub findings: Vec<String>,
}

impl LeakageAuditRecord {
    pub fn record_hash(&self) -> String {
        canonical_hash(self)
    }

    /// `split_sampling` activity carrying this record's summary, with the
    /// record hash as `output_hash`.
    pub fn to_activity(&self, activity_id: &str, agent_id: &str, timestamp: &str) -> ProvActivity {
        let rates: BTreeMap<String, f64> = self
            .curve
            .points
            .iter()
            .map(|p| (format!("{:.2}", p.threshold), p.rate))
            .collect();
        let mut fields = BTreeMap::new();
        fields.insert("split_key".into(), serde_json::to_value(self.split_key).expect("enum"));
        fields.insert("random_seed".into(), json!(self.seed));
        fields.insert(
            "leakage_audit_results".into(),
            json!({
                "method": self.curve.method.label(),
                "n_test": self.curve.n_test,
                "rates": rates,
                "overlapping_patients": self.overlap.patients.len(),
                "status": self.status,
            }),
        );
        fields.insert("output_hash".into(), json!(self.record_hash()));
        ProvActivity {
            activity_id: activity_id.to_string(),
            event_type: EventType::SplitSampling,
            timestamp: timestamp.to_string(),
            agent_id: agent_id.to_string(),
            fields,
        }
    }
}

/// Patient overlap plus leakage curve plus disclosures.
///
/// Fails on any overlapping patient or any test note at or above the
/// strictest threshold. A clean record without complete disclosures is
/// `DisclosuresRequired`.
pub fn audit_splits(
    corpus: &Corpus,
    split: &SplitManifest,
    cfg: &SimilarityConfig,
    disclosures: Disclosures,
) -> Result<LeakageAuditRecord> {
    let overlap = patient_overlap(corpus, split);
    let curve = leak_curve(corpus, split, cfg)?;
    let mut findings = Vec::new();
    for p in &overlap.patients {
        findings.push(format!("patient {} appears in {} splits", p.patient_id, p.splits.len()));
    }
    if let Some(top) = curve.points.last() {
        for o in &top.offenders {
            findings.push(format!(
                "test note {} matches train note {} at {:.4} (>= {:.2})",
                o.test_note_id, o.train_note_id, o.similarity, top.threshold
            ));
        }
    }
    let status = if !findings.is_empty() {
        AuditStatus::Fail
    } else if !disclosures.is_complete() {
        AuditStatus::DisclosuresRequired
    } else {
        AuditStatus::Pass
    };
    Ok(LeakageAuditRecord {
        split_key: split.split_key,
        seed: split.seed,
        overlap,
        curve,
        disclosures,
        status,
        findings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_fixture, FixtureKnobs, Note, SplitKey};

    fn note(id: &str, patient: &str, text: &str) -> Note {
        Note {
            note_id: id.into(),
            patient_id: patient.into(),
            text: text.into(),
            note_type: None,
            admission_year: None,
            phi_spans: vec![],
            icd_codes: vec![],
            quality_score: None,
            source: String::new(),
        }
    }

    fn manifest(key: SplitKey, pairs: &[(&str, Split)]) -> SplitManifest {
        SplitManifest {
            split_key: key,
            seed: 0,
            assignment: pairs.iter().map(|(i, s)| (i.to_string(), *s)).collect(),
        }
    }

    #[test]
    fn patient_keyed_fixture_has_no_overlap() {
        let (c, m) = make_fixture(50, 3, 4, &FixtureKnobs::default()).unwrap();
        assert!(patient_overlap(&c, &m).is_clean());
    }

    #[test]
    fn one_shared_patient_reported() {
        let c = Corpus::from_notes(vec![note("a", "P1", "x"), note("b", "P1", "y"), note("c", "P2", "z")]).unwrap();
        let m = manifest(SplitKey::Note, &[("a", Split::Train), ("b", Split::Test), ("c", Split::Test)]);
        let r = patient_overlap(&c, &m);
        assert_eq!(r.patients.len(), 1);
        assert_eq!(r.patients[0].patient_id, "P1");
        assert_eq!(r.patients[0].splits, vec![Split::Train, Split::Test]);
    }

    #[test]
    fn three_planted_overlaps() {
        let knobs = FixtureKnobs {
            patient_overlap: 3,
            ..Default::default()
        };
        let (c, m) = make_fixture(80, 1, 2, &knobs).unwrap();
        assert_eq!(patient_overlap(&c, &m).patients.len(), 3);
    }

    #[test]
    fn disjoint_vocabulary_gives_zero_curve() {
        let c = Corpus::from_notes(vec![
            note("tr1", "A", "aaaa bbbb cccc"),
            note("tr2", "B", "dddd eeee ffff"),
            note("te1", "C", "gggg hhhh iiii"),
            note("te2", "D", "jjjj kkkk llll"),
        ])
        .unwrap();
        let m = manifest(
            SplitKey::Patient,
            &[("tr1", Split::Train), ("tr2", Split::Train), ("te1", Split::Test), ("te2", Split::Test)],
        );
        for method in [SimilarityMethod::TokenJaccard, SimilarityMethod::CharNgramJaccard { n: 3 }] {
            let cfg = SimilarityConfig::new(method, vec![0.01, 0.5, 1.0]).unwrap();
            let curve = leak_curve(&c, &m, &cfg).unwrap();
            assert!(curve.points.iter().all(|p| p.count == 0));
        }
    }

    #[test]
    fn ties_break_to_smallest_train_id() {
        let c = Corpus::from_notes(vec![
            note("tr-b", "A", "same words here"),
            note("tr-a", "B", "same words here"),
            note("te", "C", "same words here"),
        ])
        .unwrap();
        let m = manifest(SplitKey::Patient, &[("tr-b", Split::Train), ("tr-a", Split::Train), ("te", Split::Test)]);
        let curve = leak_curve(&c, &m, &SimilarityConfig::default()).unwrap();
        let top = curve.points.last().unwrap();
        assert_eq!(top.offenders[0].train_note_id, "tr-a");
        assert_eq!(top.offenders[0].similarity, 1.0);
    }

    #[test]
    fn empty_partition_rejected() {
        let c = Corpus::from_notes(vec![note("a", "A", "x")]).unwrap();
        let m = manifest(SplitKey::Patient, &[("a", Split::Train)]);
        assert!(matches!(
            leak_curve(&c, &m, &SimilarityConfig::default()),
            Err(Error::EmptyPartition("test"))
        ));
    }

    #[test]
    fn five_duplicates_in_two_hundred_test_notes() {
        let knobs = FixtureKnobs {
            duplicate_across_splits: 5,
            words_per_note: (20, 40),
            ..Default::default()
        };
        // 1000 patients at 70/15/15 -> 150 test notes; use 1334 for 200.
        let (c, m) = make_fixture(1334, 1, 17, &knobs).unwrap();
        assert_eq!(m.members(Split::Test).len(), 200);
        let curve = leak_curve(&c, &m, &SimilarityConfig::default()).unwrap();
        assert_eq!(curve.rate_at(0.85), Some(0.025));
    }

    #[test]
    fn dat_rendering() {
        let curve = LeakCurve {
            method: SimilarityMethod::default(),
            n_test: 1000,
            n_train: 10,
            points: [(0.30, 62), (0.85, 2)]
                .iter()
                .map(|&(t, c)| LeakPoint {
                    threshold: t,
                    count: c,
                    rate: c as f64 / 1000.0,
                    offenders: vec![],
                })
                .collect(),
        };
        assert_eq!(curve.to_dat().render(), "threshold pct\n0.30 6.20\n0.85 0.20\n");
    }

    #[test]
    fn audit_clean_needs_disclosures_and_dirty_fails() {
        let (c, m) = make_fixture(60, 1, 3, &FixtureKnobs::default()).unwrap();
        let cfg = SimilarityConfig::default();
        let rec = audit_splits(&c, &m, &cfg, Disclosures::default()).unwrap();
        assert_eq!(rec.status, AuditStatus::DisclosuresRequired);
        assert!(rec.curve.points.last().unwrap().offenders.is_empty());

        let decl = Declaration {
            checked: true,
            justification: "templated headers stripped before labeling".into(),
        };
        let full = Disclosures {
            label_leakage: Some(decl.clone()),
            contamination: Some(decl),
        };
        let rec = audit_splits(&c, &m, &cfg, full.clone()).unwrap();
        assert_eq!(rec.status, AuditStatus::Pass);

        let dirty = FixtureKnobs {
            duplicate_across_splits: 2,
            ..Default::default()
        };
        let (c, m) = make_fixture(60, 1, 3, &dirty).unwrap();
        let rec = audit_splits(&c, &m, &cfg, full).unwrap();
        assert_eq!(rec.status, AuditStatus::Fail);
        assert_eq!(rec.curve.points.last().unwrap().offenders.len(), 2);
    }

    #[test]
    fn audit_activity_carries_record_hash() {
        let (c, m) = make_fixture(40, 1, 3, &FixtureKnobs::default()).unwrap();
        let rec = audit_splits(&c, &m, &SimilarityConfig::default(), Disclosures::default()).unwrap();
        let act = rec.to_activity("split-1", "agent-1", "2024-01-01T00:00:00Z");
        assert_eq!(act.event_type, EventType::SplitSampling);
        assert_eq!(act.fields["output_hash"], json!(rec.record_hash()));
        assert!(crate::provenance::missing_minimal_fields(&act).is_empty());
    }
}
