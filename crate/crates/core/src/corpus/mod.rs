//! Note corpora, PHI annotations and split manifests.
//!
//! A corpus file is UTF-8 JSON Lines, one note per line:
//!
//! ```text
//! {"note_id":"N1","patient_id":"P1","text":"...","note_type":"progress",
//!  "admission_year":2014,"phi_spans":[{"start":0,"end":6,"category":"NAME"}],
//!  "icd_codes":["401.9"],"quality_score":0.93,"source":"ehr-extract/v2"}
//! ```
//!
//! PHI span offsets count Unicode scalar values (chars), not bytes, and `end`
//! is exclusive. Absent `admission_year`, `quality_score` and `note_type` are
//! written as `null` and kept as `None`; they are never replaced by sentinel
//! values because missingness statistics depend on the distinction.

mod fixture;
mod split;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use fixture::{make_fixture, FixtureKnobs, NearDuplicateBand, ResidualPhi};
pub use split::{load_split, Split, SplitKey, SplitManifest};

/// Clinical note category. Values outside the known set are kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoteType {
    Progress,
    Discharge,
    Radiology,
    Nursing,
    Ed,
    Consult,
    Other(String),
}

impl NoteType {
    pub fn as_str(&self) -> &str {
        match self {
            NoteType::Progress => "progress",
            NoteType::Discharge => "discharge",
            NoteType::Radiology => "radiology",
            NoteType::Nursing => "nursing",
            NoteType::Ed => "ed",
            NoteType::Consult => "consult",
            NoteType::Other(s) => s,
        }
    }

    pub fn parse(s: &str) -> NoteType {
        match s {
            "progress" => NoteType::Progress,
            "discharge" => NoteType::Discharge,
            "radiology" => NoteType::Radiology,
            "nursing" => NoteType::Nursing,
            "ed" => NoteType::Ed,
            "consult" => NoteType::Consult,
            other => NoteType::Other(other.to_string()),
        }
    }
}

impl fmt::Display for NoteType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for NoteType {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for NoteType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(NoteType::parse(&s))
    }
}

/// The ten annotated PHI entity types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PhiCategory {
    Name,
    Profession,
    Location,
    Age,
    Date,
    Contact,
    Id,
    Hospital,
    Device,
    Other,
}

impl PhiCategory {
    pub const ALL: [PhiCategory; 10] = [
        PhiCategory::Name,
        PhiCategory::Profession,
        PhiCategory::Location,
        PhiCategory::Age,
        PhiCategory::Date,
        PhiCategory::Contact,
        PhiCategory::Id,
        PhiCategory::Hospital,
        PhiCategory::Device,
        PhiCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PhiCategory::Name => "NAME",
            PhiCategory::Profession => "PROFESSION",
            PhiCategory::Location => "LOCATION",
            PhiCategory::Age => "AGE",
            PhiCategory::Date => "DATE",
            PhiCategory::Contact => "CONTACT",
            PhiCategory::Id => "ID",
            PhiCategory::Hospital => "HOSPITAL",
            PhiCategory::Device => "DEVICE",
            PhiCategory::Other => "OTHER",
        }
    }
}

/// Annotated PHI mention: `[start, end)` in chars over the note text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiSpan {
    pub start: usize,
    pub end: usize,
    pub category: PhiCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub note_id: String,
    pub patient_id: String,
    pub text: String,
    #[serde(default)]
    pub note_type: Option<NoteType>,
    #[serde(default)]
    pub admission_year: Option<i32>,
    #[serde(default)]
    pub phi_spans: Vec<PhiSpan>,
    #[serde(default)]
    pub icd_codes: Vec<String>,
    #[serde(default)]
    pub quality_score: Option<f64>,
    #[serde(default)]
    pub source: String,
}

impl Note {
    /// Checks the per-note invariants (span bounds, ICD uniqueness, score range).
    pub fn validate(&self) -> Result<()> {
        let len = self.text.chars().count();
        for span in &self.phi_spans {
            if span.start >= span.end || span.end > len {
                return Err(Error::SpanOutOfBounds {
                    note_id: self.note_id.clone(),
                    start: span.start,
                    end: span.end,
                    len,
                });
            }
        }
        let mut seen = HashSet::with_capacity(self.icd_codes.len());
        for code in &self.icd_codes {
            if !seen.insert(code.as_str()) {
                return Err(Error::DuplicateIcdCode {
                    note_id: self.note_id.clone(),
                    code: code.clone(),
                });
            }
        }
        if let Some(q) = self.quality_score {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidArgument(format!(
                    "note `{}`: quality_score {q} outside [0, 1]",
                    self.note_id
                )));
            }
        }
        Ok(())
    }

    /// Whitespace token count, used for length histograms.
    pub fn token_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

/// Immutable, validated collection of notes indexed by note and patient id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    notes: Vec<Note>,
    by_id: HashMap<String, usize>,
    by_patient: BTreeMap<String, Vec<usize>>,
}

impl Corpus {
    pub fn from_notes(notes: Vec<Note>) -> Result<Self> {
        let mut corpus = Corpus {
            notes: Vec::with_capacity(notes.len()),
            ..Default::default()
        };
        for (i, note) in notes.into_iter().enumerate() {
            corpus.push(note, i + 1)?;
        }
        Ok(corpus)
    }

    fn push(&mut self, note: Note, line: usize) -> Result<()> {
        note.validate()?;
        if self.by_id.contains_key(&note.note_id) {
            return Err(Error::DuplicateNoteId {
                note_id: note.note_id,
                line,
            });
        }
        let idx = self.notes.len();
        self.by_id.insert(note.note_id.clone(), idx);
        self.by_patient
            .entry(note.patient_id.clone())
            .or_default()
            .push(idx);
        self.notes.push(note);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Note> {
        self.notes.iter()
    }

    pub fn get(&self, note_id: &str) -> Option<&Note> {
        self.by_id.get(note_id).map(|&i| &self.notes[i])
    }

    pub fn patient_ids(&self) -> impl Iterator<Item = &str> {
        self.by_patient.keys().map(String::as_str)
    }

    pub fn notes_for_patient(&self, patient_id: &str) -> Vec<&Note> {
        self.by_patient
            .get(patient_id)
            .map(|idx| idx.iter().map(|&i| &self.notes[i]).collect())
            .unwrap_or_default()
    }

    pub fn into_notes(self) -> Vec<Note> {
        self.notes
    }

    /// Serializes as JSON Lines, one note per line, in corpus order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for note in &self.notes {
            out.push_str(&serde_json::to_string(note).expect("note serializes"));
            out.push('\n');
        }
        out
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Note;
    type IntoIter = std::slice::Iter<'a, Note>;

    fn into_iter(self) -> Self::IntoIter {
        self.notes.iter()
    }
}

/// Streams a JSON Lines corpus. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let note: Note = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        corpus.push(note, line_no)?;
    }
    Ok(corpus)
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(corpus.to_jsonl().as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = concat!(
        r#"{"note_id":"N1","patient_id":"P1","text":"Seen by Dr Smith today.","note_type":"progress","admission_year":2012,"phi_spans":[{"start":8,"end":16,"category":"NAME"}],"icd_codes":["401.9"],"quality_score":0.9,"source":"site-a"}"#,
        "\n",
        r#"{"note_id":"N2","patient_id":"P1","text":"Discharged home.","note_type":"discharge","admission_year":null,"phi_spans":[],"icd_codes":[],"quality_score":null,"source":"site-a"}"#,
        "\n",
        r#"{"note_id":"N3","patient_id":"P2","text":"Café visit, stable.","note_type":"telehealth","admission_year":2013,"phi_spans":[{"start":0,"end":4,"category":"LOCATION"}],"icd_codes":["250.00","401.9"],"quality_score":1.0,"source":"site-b"}"#,
        "\n"
    );

    #[test]
    fn empty_input_gives_empty_corpus() {
        let c = read_corpus("".as_bytes()).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn three_line_fixture_loads_and_indexes() {
        let c = read_corpus(THREE.as_bytes()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.get("N2").unwrap().note_type, Some(NoteType::Discharge));
        assert_eq!(c.notes_for_patient("P1").len(), 2);
        assert_eq!(c.notes_for_patient("P2")[0].note_id, "N3");
        assert_eq!(
            c.get("N3").unwrap().note_type,
            Some(NoteType::Other("telehealth".into()))
        );
        assert_eq!(c.get("N2").unwrap().admission_year, None);
        assert!(c.get("N9").is_none());
    }

    #[test]
    fn char_offsets_not_bytes() {
        // "Café" is 4 chars but 5 bytes; span 0..4 must be accepted.
        let c = read_corpus(THREE.as_bytes()).unwrap();
        let n3 = c.get("N3").unwrap();
        let covered: String = n3.text.chars().take(4).collect();
        assert_eq!(covered, "Café");
    }

    #[test]
    fn span_past_end_names_note() {
        let line = r#"{"note_id":"bad-1","patient_id":"P","text":"short","phi_spans":[{"start":2,"end":9,"category":"DATE"}]}"#;
        match read_corpus(line.as_bytes()) {
            Err(Error::SpanOutOfBounds { note_id, end, len, .. }) => {
                assert_eq!(note_id, "bad-1");
                assert_eq!((end, len), (9, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_length_span_rejected() {
        let line = r#"{"note_id":"z","patient_id":"P","text":"short","phi_spans":[{"start":2,"end":2,"category":"DATE"}]}"#;
        assert!(matches!(
            read_corpus(line.as_bytes()),
            Err(Error::SpanOutOfBounds { .. })
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let input = format!("{}{}", THREE.lines().next().unwrap(), "\n{not json\n");
        match read_corpus(input.as_bytes()) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_note_id_rejected() {
        let first = THREE.lines().next().unwrap();
        let input = format!("{first}\n{first}\n");
        match read_corpus(input.as_bytes()) {
            Err(Error::DuplicateNoteId { note_id, line }) => {
                assert_eq!(note_id, "N1");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_icd_rejected() {
        let line = r#"{"note_id":"d","patient_id":"P","text":"x","icd_codes":["1","1"]}"#;
        assert!(matches!(
            read_corpus(line.as_bytes()),
            Err(Error::DuplicateIcdCode { .. })
        ));
    }

    #[test]
    fn unknown_phi_category_is_malformed() {
        let line = r#"{"note_id":"d","patient_id":"P","text":"xyz","phi_spans":[{"start":0,"end":1,"category":"EMAIL"}]}"#;
        assert!(matches!(
            read_corpus(line.as_bytes()),
            Err(Error::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn round_trip_is_field_equal() {
        let c = read_corpus(THREE.as_bytes()).unwrap();
        let again = read_corpus(c.to_jsonl().as_bytes()).unwrap();
        assert_eq!(c.notes(), again.notes());
    }
}
