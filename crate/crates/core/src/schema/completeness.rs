use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ArtifactDoc, DocKind, FieldKey, Schema, SectionId, Tier};
use crate::dat::DatTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionCompleteness {
    pub populated: usize,
    pub total: usize,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierCompleteness {
    pub tier: Tier,
    pub populated: usize,
    pub total: usize,
}

/// Mandatory-field completeness of one document. Recommended and optional
/// tiers are reported in `tiers` for information only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub doc_kind: DocKind,
    pub doc_version: String,
    pub doc_checksum: String,
    pub schema_hash: String,
    pub populated: usize,
    pub total: usize,
    pub c: f64,
    /// `c` rounded to four decimals.
    pub c_display: String,
    pub missing_mandatory: Vec<FieldKey>,
    pub per_section: BTreeMap<SectionId, SectionCompleteness>,
    pub tiers: Vec<TierCompleteness>,
}

fn ratio(populated: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        populated as f64 / total as f64
    }
}

impl CompletenessReport {
    pub fn is_complete(&self) -> bool {
        self.populated == self.total
    }

    /// Per-section percentages with header `section pct`.
    pub fn to_section_dat(&self) -> DatTable {
        let mut t = DatTable::new(["section", "pct"]);
        for (s, sc) in &self.per_section {
            t.push([s.short_label().to_string(), format!("{:.2}", sc.c * 100.0)]);
        }
        t
    }
}

pub fn completeness(doc: &ArtifactDoc, schema: &Schema) -> CompletenessReport {
    let mut per_section: BTreeMap<SectionId, SectionCompleteness> = BTreeMap::new();
    let mut tiers: BTreeMap<Tier, (usize, usize)> = BTreeMap::new();
    let mut missing = Vec::new();
    for spec in schema.fields() {
        let key = FieldKey::new(spec.section_id, spec.field_id.clone());
        let ok = doc.values.get(&key).is_some_and(|v| v.is_populated(spec));
        let t = tiers.entry(spec.tier).or_default();
        t.1 += 1;
        t.0 += ok as usize;
        if spec.tier != Tier::Mandatory {
            continue;
        }
        let s = per_section.entry(spec.section_id).or_insert(SectionCompleteness {
            populated: 0,
            total: 0,
            c: 0.0,
        });
        s.total += 1;
        if ok {
            s.populated += 1;
        } else {
            missing.push(key);
        }
    }
    for s in per_section.values_mut() {
        s.c = ratio(s.populated, s.total);
    }
    let total = schema.mandatory().count();
    let populated = total - missing.len();
    let c = ratio(populated, total);
    missing.sort();
    CompletenessReport {
        doc_kind: doc.doc_kind,
        doc_version: doc.version.clone(),
        doc_checksum: doc.checksum.clone(),
        schema_hash: schema.hash().to_string(),
        populated,
        total,
        c,
        c_display: format!("{c:.4}"),
        missing_mandatory: missing,
        per_section,
        tiers: tiers
            .into_iter()
            .filter(|(t, _)| *t != Tier::Mandatory)
            .map(|(tier, (populated, total))| TierCompleteness { tier, populated, total })
            .collect(),
    }
}

/// Completeness over the union of mandatory fields of a datasheet and a card.
pub fn combined_completeness(
    datasheet: &ArtifactDoc,
    datasheet_schema: &Schema,
    card: &ArtifactDoc,
    card_schema: &Schema,
) -> (usize, usize, f64) {
    let a = completeness(datasheet, datasheet_schema);
    let b = completeness(card, card_schema);
    let (p, t) = (a.populated + b.populated, a.total + b.total);
    (p, t, ratio(p, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub version: String,
    pub overall_pct: f64,
    pub group_pct: Vec<f64>,
    /// Overall completeness fell relative to the previous version.
    pub regression: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTrace {
    pub groups: Vec<String>,
    pub rows: Vec<DriftRow>,
}

impl DriftTrace {
    pub fn regressions(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| r.regression).map(|r| r.version.as_str()).collect()
    }

    /// Header `ver overall <group>...`, percentages to two decimals.
    pub fn to_dat(&self) -> DatTable {
        let mut header = vec!["ver".to_string(), "overall".to_string()];
        header.extend(self.groups.iter().cloned());
        let mut t = DatTable::new(header);
        for r in &self.rows {
            let mut row = vec![r.version.clone(), format!("{:.2}", r.overall_pct)];
            row.extend(r.group_pct.iter().map(|p| format!("{p:.2}")));
            t.push(row);
        }
        t
    }
}

/// The `privacy` and `splits` groups used in the documentation drift plot.
pub fn default_drift_groups() -> Vec<(String, Vec<SectionId>)> {
    vec![
        ("privacy".to_string(), vec![SectionId::DeidPrivacy]),
        ("splits".to_string(), vec![SectionId::SplitsLeakage]),
    ]
}

pub fn completeness_drift(docs: &[ArtifactDoc], schema: &Schema, groups: &[(String, Vec<SectionId>)]) -> DriftTrace {
    let mut rows: Vec<DriftRow> = Vec::with_capacity(docs.len());
    let mut prev: Option<(usize, usize)> = None;
    for doc in docs {
        let r = completeness(doc, schema);
        let group_pct = groups
            .iter()
            .map(|(_, sections)| {
                let (p, t) = sections
                    .iter()
                    .filter_map(|s| r.per_section.get(s))
                    .fold((0, 0), |(p, t), s| (p + s.populated, t + s.total));
                ratio(p, t) * 100.0
            })
            .collect();
        // Compare as exact fractions so equal ratios never flag.
        let regression = prev.is_some_and(|(pp, pt)| r.populated * pt < pp * r.total);
        prev = Some((r.populated, r.total));
        rows.push(DriftRow {
            version: doc.version.clone(),
            overall_pct: r.c * 100.0,
            group_pct,
            regression,
        });
    }
    DriftTrace {
        groups: groups.iter().map(|(n, _)| n.clone()).collect(),
        rows,
    }
}
