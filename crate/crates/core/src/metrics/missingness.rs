use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Note};
use crate::dat::DatTable;
use crate::error::{Error, Result};

/// Note fields whose absence is tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingField {
    AdmissionYear,
    PhiSpans,
    IcdCodes,
    QualityScore,
    NoteType,
}

impl MissingField {
    pub const ALL: [MissingField; 5] = [
        MissingField::AdmissionYear,
        MissingField::PhiSpans,
        MissingField::IcdCodes,
        MissingField::QualityScore,
        MissingField::NoteType,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MissingField::AdmissionYear => "admission_year",
            MissingField::PhiSpans => "phi_spans",
            MissingField::IcdCodes => "icd_codes",
            MissingField::QualityScore => "quality_score",
            MissingField::NoteType => "note_type",
        }
    }

    /// Row label in the `field pct` plot data.
    pub fn label(self) -> &'static str {
        match self {
            MissingField::AdmissionYear => "admissionDate",
            MissingField::PhiSpans => "phiEmpty",
            MissingField::IcdCodes => "icdEmpty",
            MissingField::QualityScore => "qualityMissing",
            MissingField::NoteType => "noteTypeMissing",
        }
    }

    pub fn is_missing(self, note: &Note) -> bool {
        match self {
            MissingField::AdmissionYear => note.admission_year.is_none(),
            MissingField::PhiSpans => note.phi_spans.is_empty(),
            MissingField::IcdCodes => note.icd_codes.is_empty(),
            MissingField::QualityScore => note.quality_score.is_none(),
            MissingField::NoteType => note.note_type.is_none(),
        }
    }
}

impl fmt::Display for MissingField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MissingField {
    type Err = Error;

    /// Accepts the field name or its plot label.
    fn from_str(s: &str) -> Result<Self> {
        MissingField::ALL
            .into_iter()
            .find(|f| f.as_str() == s || f.label() == s)
            .ok_or_else(|| Error::UnknownField(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingKind {
    /// The field does not apply to the note's type.
    Structural,
    /// The field applies but was not recorded.
    Incidental,
}

/// Which note types a field does not apply to. Absence on those types is
/// structural; everywhere else it is incidental.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Applicability {
    #[serde(default)]
    pub inapplicable: BTreeMap<MissingField, BTreeSet<String>>,
}

impl Applicability {
    pub fn classify(&self, field: MissingField, note: &Note) -> MissingKind {
        let structural = note
            .note_type
            .as_ref()
            .zip(self.inapplicable.get(&field))
            .is_some_and(|(t, types)| types.contains(t.as_str()));
        if structural {
            MissingKind::Structural
        } else {
            MissingKind::Incidental
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrataKey {
    NoteType,
    AdmissionYear,
    Source,
}

impl StrataKey {
    fn of(self, note: &Note) -> String {
        let v = match self {
            StrataKey::NoteType => note.note_type.as_ref().map(|t| t.as_str().to_string()),
            StrataKey::AdmissionYear => note.admission_year.map(|y| y.to_string()),
            StrataKey::Source => Some(note.source.clone()),
        };
        v.unwrap_or_else(|| "(none)".to_string())
    }
}

impl FromStr for StrataKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "note_type" => Ok(StrataKey::NoteType),
            "admission_year" => Ok(StrataKey::AdmissionYear),
            "source" => Ok(StrataKey::Source),
            _ => Err(Error::UnknownField(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMissingness {
    pub field: MissingField,
    pub n: usize,
    pub missing: usize,
    pub structural: usize,
    pub incidental: usize,
    pub rate: f64,
    /// Structural when every absence is structural, incidental otherwise.
    pub kind: MissingKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessProfile {
    pub n: usize,
    pub per_field: Vec<FieldMissingness>,
    pub strata_by: Option<StrataKey>,
    pub strata: Option<BTreeMap<String, Vec<FieldMissingness>>>,
}

impl MissingnessProfile {
    pub fn rate(&self, field: MissingField) -> Option<f64> {
        self.per_field.iter().find(|f| f.field == field).map(|f| f.rate)
    }

    /// Header `field pct`, percentages to two decimals.
    pub fn to_dat(&self) -> DatTable {
        let mut t = DatTable::new(["field", "pct"]);
        for f in &self.per_field {
            t.push([f.field.label().to_string(), format!("{:.2}", f.rate * 100.0)]);
        }
        t
    }
}

fn profile<'a>(notes: impl Iterator<Item = &'a Note> + Clone, fields: &[MissingField], app: &Applicability) -> Vec<FieldMissingness> {
    fields
        .iter()
        .map(|&field| {
            let (mut n, mut structural, mut incidental) = (0, 0, 0);
            for note in notes.clone() {
                n += 1;
                if field.is_missing(note) {
                    match app.classify(field, note) {
                        MissingKind::Structural => structural += 1,
                        MissingKind::Incidental => incidental += 1,
                    }
                }
            }
            let missing = structural + incidental;
            FieldMissingness {
                field,
                n,
                missing,
                structural,
                incidental,
                rate: if n == 0 { 0.0 } else { missing as f64 / n as f64 },
                kind: if missing > 0 && incidental == 0 {
                    MissingKind::Structural
                } else {
                    MissingKind::Incidental
                },
            }
        })
        .collect()
}

/// Per-field missingness rates, optionally stratified.
pub fn missingness(
    corpus: &Corpus,
    fields: &[MissingField],
    strata_by: Option<StrataKey>,
    applicability: &Applicability,
) -> MissingnessProfile {
    let strata = strata_by.map(|key| {
        let mut groups: BTreeMap<String, Vec<&Note>> = BTreeMap::new();
        for note in corpus.iter() {
            groups.entry(key.of(note)).or_default().push(note);
        }
        groups
            .into_iter()
            .map(|(k, notes)| (k, profile(notes.iter().copied(), fields, applicability)))
            .collect()
    });
    MissingnessProfile {
        n: corpus.len(),
        per_field: profile(corpus.iter(), fields, applicability),
        strata_by,
        strata,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_fixture, FixtureKnobs, NoteType};

    fn fixture(knobs: &FixtureKnobs) -> Corpus {
        make_fixture(300, 3, 11, knobs).unwrap().0
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(matches!("discharge_date".parse::<MissingField>(), Err(Error::UnknownField(_))));
        assert_eq!("icdEmpty".parse::<MissingField>().unwrap(), MissingField::IcdCodes);
    }

    #[test]
    fn all_icd_present_is_zero() {
        let c = fixture(&FixtureKnobs::default());
        let p = missingness(&c, &[MissingField::IcdCodes], None, &Applicability::default());
        assert_eq!(p.rate(MissingField::IcdCodes), Some(0.0));
    }

    #[test]
    fn matches_brute_force_and_strata_average_back() {
        let knobs = FixtureKnobs {
            icd_empty_frac: 0.045,
            quality_missing_frac: 0.1,
            admission_year_missing_frac: 0.05,
            phi_empty_frac: 0.3,
            ..FixtureKnobs::default()
        };
        let c = fixture(&knobs);
        let p = missingness(&c, &MissingField::ALL, Some(StrataKey::NoteType), &Applicability::default());
        for f in &p.per_field {
            let brute = c.iter().filter(|n| f.field.is_missing(n)).count();
            assert_eq!(f.missing, brute, "{}", f.field);
            let strata = p.strata.as_ref().unwrap();
            let (m, n) = strata
                .values()
                .map(|rows| rows.iter().find(|r| r.field == f.field).unwrap())
                .fold((0, 0), |(m, n), r| (m + r.missing, n + r.n));
            assert_eq!((m, n), (f.missing, f.n));
            let weighted: f64 = strata
                .values()
                .map(|rows| {
                    let r = rows.iter().find(|r| r.field == f.field).unwrap();
                    r.rate * r.n as f64
                })
                .sum::<f64>()
                / c.len() as f64;
            assert!((weighted - f.rate).abs() < 1e-12);
        }
    }

    #[test]
    fn structural_classification() {
        let c = fixture(&FixtureKnobs {
            icd_empty_frac: 0.2,
            ..FixtureKnobs::default()
        });
        let all_types: BTreeSet<String> = c
            .iter()
            .filter_map(|n| n.note_type.as_ref().map(NoteType::as_str).map(str::to_string))
            .collect();
        let app = Applicability {
            inapplicable: BTreeMap::from([(MissingField::IcdCodes, all_types)]),
        };
        let p = missingness(&c, &[MissingField::IcdCodes], None, &app);
        let f = &p.per_field[0];
        assert_eq!(f.incidental, 0);
        assert_eq!(f.kind, MissingKind::Structural);
        let p = missingness(&c, &[MissingField::IcdCodes], None, &Applicability::default());
        assert_eq!(p.per_field[0].kind, MissingKind::Incidental);
    }

    #[test]
    fn dat_labels() {
        let c = fixture(&FixtureKnobs::default());
        let p = missingness(&c, &MissingField::ALL, None, &Applicability::default());
        let s = p.to_dat().render();
        assert!(s.starts_with("field pct\nadmissionDate "));
        assert!(s.contains("\nicdEmpty 0.00\n"));
    }
}
