use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Unit that the split is keyed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKey {
    Patient,
    Note,
}

/// `{split_key, seed, assignment: {note_id: split}}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub split_key: SplitKey,
    pub seed: u64,
    pub assignment: BTreeMap<String, Split>,
}

impl SplitManifest {
    /// Checks every note id against the corpus and, for patient-keyed
    /// manifests, that each patient's notes share one split.
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        if let Some(unknown) = self.assignment.keys().find(|id| corpus.get(id).is_none()) {
            return Err(Error::UnknownNoteId(unknown.clone()));
        }
        if self.split_key == SplitKey::Patient {
            let violators = self.patients_in_multiple_splits(corpus);
            if !violators.is_empty() {
                return Err(Error::PatientSplitViolation(violators.into_keys().collect()));
            }
        }
        Ok(())
    }

    /// Patients whose assigned notes land in more than one split, with the
    /// splits they appear in.
    pub fn patients_in_multiple_splits(&self, corpus: &Corpus) -> BTreeMap<String, BTreeSet<Split>> {
        let mut seen: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
        for (note_id, split) in &self.assignment {
            if let Some(note) = corpus.get(note_id) {
                seen.entry(note.patient_id.as_str()).or_default().insert(*split);
            }
        }
        seen.into_iter()
            .filter(|(_, s)| s.len() > 1)
            .map(|(p, s)| (p.to_string(), s))
            .collect()
    }

    pub fn split_of(&self, note_id: &str) -> Option<Split> {
        self.assignment.get(note_id).copied()
    }

    /// Note ids assigned to `split`, sorted.
    pub fn members(&self, split: Split) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn counts(&self) -> BTreeMap<Split, usize> {
        let mut counts = BTreeMap::new();
        for split in self.assignment.values() {
            *counts.entry(*split).or_insert(0) += 1;
        }
        counts
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

pub fn load_split(path: impl AsRef<Path>, corpus: &Corpus) -> Result<SplitManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: SplitManifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    manifest.validate(corpus)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Note;
    use proptest::prelude::*;

    fn note(id: &str, patient: &str) -> Note {
        Note {
            note_id: id.into(),
            patient_id: patient.into(),
            text: format!("text of {id}"),
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
            seed: 1,
            assignment: pairs.iter().map(|(id, s)| (id.to_string(), *s)).collect(),
        }
    }

    #[test]
    fn same_patient_across_splits_is_violation_for_patient_key() {
        let corpus = Corpus::from_notes(vec![note("a", "P1"), note("b", "P1"), note("c", "P2")]).unwrap();
        let m = manifest(
            SplitKey::Patient,
            &[("a", Split::Train), ("b", Split::Test), ("c", Split::Test)],
        );
        match m.validate(&corpus) {
            Err(Error::PatientSplitViolation(p)) => assert_eq!(p, vec!["P1".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn same_assignment_is_fine_for_note_key() {
        let corpus = Corpus::from_notes(vec![note("a", "P1"), note("b", "P1")]).unwrap();
        let m = manifest(SplitKey::Note, &[("a", Split::Train), ("b", Split::Test)]);
        m.validate(&corpus).unwrap();
    }

    #[test]
    fn unknown_note_rejected() {
        let corpus = Corpus::from_notes(vec![note("a", "P1")]).unwrap();
        let m = manifest(SplitKey::Note, &[("zz", Split::Train)]);
        assert!(matches!(m.validate(&corpus), Err(Error::UnknownNoteId(id)) if id == "zz"));
    }

    #[test]
    fn manifest_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = Corpus::from_notes(vec![note("a", "P1"), note("b", "P2")]).unwrap();
        let m = manifest(SplitKey::Patient, &[("a", Split::Train), ("b", Split::Val)]);
        let path = dir.path().join("split.json");
        fs::write(&path, m.to_json()).unwrap();
        assert_eq!(load_split(&path, &corpus).unwrap(), m);
    }

    proptest! {
        // Zero false negatives: any manifest in which some patient spans two
        // splits is rejected when keyed on patient.
        #[test]
        fn patient_violations_never_missed(
            patients in proptest::collection::vec(0usize..6, 1..30),
            splits in proptest::collection::vec(0usize..3, 30),
        ) {
            let notes: Vec<Note> = patients
                .iter()
                .enumerate()
                .map(|(i, p)| note(&format!("n{i}"), &format!("P{p}")))
                .collect();
            let corpus = Corpus::from_notes(notes).unwrap();
            let all = [Split::Train, Split::Val, Split::Test];
            let assignment: BTreeMap<String, Split> = (0..patients.len())
                .map(|i| (format!("n{i}"), all[splits[i]]))
                .collect();
            let mut expected = BTreeSet::new();
            for p in 0..6 {
                let used: BTreeSet<usize> = (0..patients.len())
                    .filter(|&i| patients[i] == p)
                    .map(|i| splits[i])
                    .collect();
                if used.len() > 1 {
                    expected.insert(format!("P{p}"));
                }
            }
            let m = SplitManifest { split_key: SplitKey::Patient, seed: 0, assignment };
            match m.validate(&corpus) {
                Ok(()) => prop_assert!(expected.is_empty()),
                Err(Error::PatientSplitViolation(found)) => {
                    prop_assert_eq!(found.into_iter().collect::<BTreeSet<_>>(), expected)
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
