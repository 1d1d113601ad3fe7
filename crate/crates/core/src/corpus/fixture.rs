//! Seeded synthetic corpus generator with knobs for planting defects.
//!
//! Generation order is fixed: base notes, residual PHI injection, patient
//! overlap, exact cross-split duplicates, then near-duplicate bands. Each
//! stage draws from the same seeded stream, so a given `(seed, knobs)` pair
//! always yields byte-identical output.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Note, NoteType, PhiCategory, PhiSpan, Split, SplitKey, SplitManifest};
use crate::error::{Error, Result};
use crate::leakage::char_ngram_jaccard;

/// Exact-count allocation of residual (unredacted) PHI-like strings.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualPhi {
    /// Share of notes carrying exactly one residual pattern category.
    pub one_category_frac: f64,
    /// Share of notes carrying a date, a phone number and an email (three categories).
    pub high_risk_frac: f64,
}

/// Test notes rewritten as near-duplicates of a train note, with exact
/// character 5-gram Jaccard similarity in `[min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearDuplicateBand {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureKnobs {
    /// Test notes overwritten with the text of a distinct train note.
    pub duplicate_across_splits: usize,
    /// Bernoulli rate of notes with no ICD codes.
    pub icd_empty_frac: f64,
    pub quality_missing_frac: f64,
    pub admission_year_missing_frac: f64,
    /// Bernoulli rate of notes with no annotated PHI.
    pub phi_empty_frac: f64,
    /// Mixing weight of the drift code pool at the last year; rises linearly from 0 at the first.
    pub icd_year_shift: f64,
    pub first_year: i32,
    pub n_years: u32,
    pub residual_phi: ResidualPhi,
    /// Test notes relabeled onto a train patient; forces a note-keyed manifest.
    pub patient_overlap: usize,
    pub near_duplicates: Vec<NearDuplicateBand>,
    /// Train/val/test shares of patients.
    pub split_ratios: [f64; 3],
    pub words_per_note: (usize, usize),
}

impl Default for FixtureKnobs {
    fn default() -> Self {
        FixtureKnobs {
            duplicate_across_splits: 0,
            icd_empty_frac: 0.0,
            quality_missing_frac: 0.0,
            admission_year_missing_frac: 0.0,
            phi_empty_frac: 0.0,
            icd_year_shift: 0.0,
            first_year: 2010,
            n_years: 10,
            residual_phi: ResidualPhi::default(),
            patient_overlap: 0,
            near_duplicates: Vec::new(),
            split_ratios: [0.70, 0.15, 0.15],
            words_per_note: (40, 90),
        }
    }
}

const BASE_CODES: &[&str] = &[
    "401.9", "428.0", "427.31", "414.01", "584.9", "250.00", "272.4", "518.81", "599.0", "530.81",
    "038.9", "285.9", "244.9", "496", "403.90", "V58.61", "995.92", "276.1", "305.1", "486",
    "585.9", "V45.81", "412", "707.0", "V15.82", "287.5", "493.90", "276.2", "311", "V58.67",
];

const DRIFT_CODES: &[&str] = &[
    "E11.9", "I10", "I48.91", "N17.9", "J96.01", "E78.5", "K21.9", "D64.9", "E03.9", "N39.0",
    "A41.9", "I50.9", "Z79.01", "F17.210", "J18.9",
];

const NOTE_TYPES: &[(NoteType, u32)] = &[
    (NoteType::Progress, 40),
    (NoteType::Nursing, 20),
    (NoteType::Radiology, 15),
    (NoteType::Discharge, 10),
    (NoteType::Ed, 8),
    (NoteType::Consult, 7),
];

const FIXTURE_SOURCE: &str = "fixture-generator/v1";

#[derive(Debug, Clone)]
enum Token {
    Word(String),
    Placeholder(PhiCategory),
    Residual(String),
}

fn render(tokens: &[Token]) -> (String, Vec<PhiSpan>) {
    let mut text = String::new();
    let mut spans = Vec::new();
    let mut pos = 0usize;
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 {
            text.push(' ');
            pos += 1;
        }
        let s = match tok {
            Token::Word(w) | Token::Residual(w) => w.clone(),
            Token::Placeholder(c) => format!("[{}]", c.as_str()),
        };
        let len = s.chars().count();
        if let Token::Placeholder(c) = tok {
            spans.push(PhiSpan {
                start: pos,
                end: pos + len,
                category: *c,
            });
        }
        text.push_str(&s);
        pos += len;
    }
    (text, spans)
}

/// Fixed pseudo-word vocabulary, independent of the fixture seed.
fn vocabulary() -> Vec<String> {
    const ONSETS: &[&str] = &[
        "b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cl",
        "dr", "fl", "gr", "pl", "st", "tr",
    ];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ae", "io", "ou"];
    let mut rng = ChaCha8Rng::seed_from_u64(0x7E41_B0C5);
    let mut set = BTreeSet::new();
    while set.len() < 4000 {
        let syllables = rng.gen_range(2..=4);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
            w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
        }
        set.insert(w);
    }
    let mut words: Vec<String> = set.into_iter().collect();
    words.shuffle(&mut rng);
    words
}

struct Draft {
    note: Note,
    tokens: Vec<Token>,
}

fn validate_knobs(n_patients: usize, notes_per_patient: usize, k: &FixtureKnobs) -> Result<()> {
    let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
    if n_patients < 1 {
        return bad("n_patients must be at least 1");
    }
    if notes_per_patient < 1 {
        return bad("notes_per_patient must be at least 1");
    }
    for (name, v) in [
        ("icd_empty_frac", k.icd_empty_frac),
        ("quality_missing_frac", k.quality_missing_frac),
        ("admission_year_missing_frac", k.admission_year_missing_frac),
        ("phi_empty_frac", k.phi_empty_frac),
        ("icd_year_shift", k.icd_year_shift),
        ("residual_phi.one_category_frac", k.residual_phi.one_category_frac),
        ("residual_phi.high_risk_frac", k.residual_phi.high_risk_frac),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return bad(&format!("{name} must lie in [0, 1]"));
        }
    }
    if k.residual_phi.one_category_frac + k.residual_phi.high_risk_frac > 1.0 {
        return bad("residual PHI fractions sum above 1");
    }
    if k.n_years == 0 {
        return bad("n_years must be at least 1");
    }
    let total: f64 = k.split_ratios.iter().sum();
    if k.split_ratios.iter().any(|r| *r < 0.0) || (total - 1.0).abs() > 1e-9 {
        return bad("split_ratios must be non-negative and sum to 1");
    }
    if k.words_per_note.0 < 5 || k.words_per_note.0 > k.words_per_note.1 {
        return bad("words_per_note must be an ordered range starting at 5 or more");
    }
    for b in &k.near_duplicates {
        if !(0.0 < b.min && b.min < b.max && b.max <= 1.0) {
            return bad("near-duplicate band needs 0 < min < max <= 1");
        }
    }
    Ok(())
}

/// Builds a deterministic corpus and split manifest.
///
/// Patients are shuffled and allocated to train/val/test by `split_ratios`
/// (rounded, remainder to test), so the manifest is patient-keyed unless
/// `patient_overlap > 0`.
pub fn make_fixture(
    n_patients: usize,
    notes_per_patient: usize,
    seed: u64,
    knobs: &FixtureKnobs,
) -> Result<(Corpus, SplitManifest)> {
    validate_knobs(n_patients, notes_per_patient, knobs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary();
    let n_notes = n_patients * notes_per_patient;

    // Base notes.
    let type_total: u32 = NOTE_TYPES.iter().map(|(_, w)| w).sum();
    let base_weights: Vec<f64> = (0..BASE_CODES.len()).map(|i| 1.0 / (i as f64 + 1.0)).collect();
    let base_total: f64 = base_weights.iter().sum();
    let mut drafts: Vec<Draft> = Vec::with_capacity(n_notes);
    for p in 0..n_patients {
        let patient_id = format!("P{:06}", p + 1);
        let year_idx = rng.gen_range(0..knobs.n_years);
        for _ in 0..notes_per_patient {
            let note_id = format!("N{:07}", drafts.len() + 1);
            let mut pick = rng.gen_range(0..type_total);
            let note_type = NOTE_TYPES
                .iter()
                .find(|(_, w)| {
                    if pick < *w {
                        true
                    } else {
                        pick -= w;
                        false
                    }
                })
                .map(|(t, _)| t.clone())
                .expect("weights cover range");

            let n_words = rng.gen_range(knobs.words_per_note.0..=knobs.words_per_note.1);
            let mut tokens: Vec<Token> = (0..n_words)
                .map(|_| Token::Word(vocab[rng.gen_range(0..vocab.len())].clone()))
                .collect();
            if !rng.gen_bool(knobs.phi_empty_frac) {
                for _ in 0..rng.gen_range(1..=4) {
                    let cat = PhiCategory::ALL[rng.gen_range(0..PhiCategory::ALL.len())];
                    let at = rng.gen_range(0..=tokens.len());
                    tokens.insert(at, Token::Placeholder(cat));
                }
            }

            let mut icd_codes = Vec::new();
            if !rng.gen_bool(knobs.icd_empty_frac) {
                let drift_w = if knobs.n_years > 1 {
                    knobs.icd_year_shift * year_idx as f64 / (knobs.n_years - 1) as f64
                } else {
                    0.0
                };
                let k = rng.gen_range(1..=3);
                while icd_codes.len() < k {
                    let code = if rng.gen_bool(drift_w) {
                        DRIFT_CODES[rng.gen_range(0..DRIFT_CODES.len())]
                    } else {
                        let mut u = rng.gen::<f64>() * base_total;
                        let mut chosen = BASE_CODES[BASE_CODES.len() - 1];
                        for (c, w) in BASE_CODES.iter().zip(&base_weights) {
                            if u < *w {
                                chosen = c;
                                break;
                            }
                            u -= w;
                        }
                        chosen
                    };
                    if !icd_codes.iter().any(|c| c == code) {
                        icd_codes.push(code.to_string());
                    }
                }
            }
            let quality_score = if rng.gen_bool(knobs.quality_missing_frac) {
                None
            } else {
                Some((800.0 + rng.gen_range(0..=200) as f64) / 1000.0)
            };
            let admission_year = if rng.gen_bool(knobs.admission_year_missing_frac) {
                None
            } else {
                Some(knobs.first_year + year_idx as i32)
            };
            drafts.push(Draft {
                note: Note {
                    note_id,
                    patient_id: patient_id.clone(),
                    text: String::new(),
                    note_type: Some(note_type),
                    admission_year,
                    phi_spans: Vec::new(),
                    icd_codes,
                    quality_score,
                    source: FIXTURE_SOURCE.to_string(),
                },
                tokens,
            });
        }
    }

    // Patient-level split.
    let mut patients: Vec<usize> = (0..n_patients).collect();
    patients.shuffle(&mut rng);
    let n_train = (n_patients as f64 * knobs.split_ratios[0]).round() as usize;
    let n_val = ((n_patients as f64 * knobs.split_ratios[1]).round() as usize).min(n_patients - n_train);
    let mut patient_split = vec![Split::Test; n_patients];
    for (rank, &p) in patients.iter().enumerate() {
        patient_split[p] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let note_split: Vec<Split> = (0..n_notes).map(|i| patient_split[i / notes_per_patient]).collect();

    // Residual PHI, exact counts.
    let n_high = (knobs.residual_phi.high_risk_frac * n_notes as f64).round() as usize;
    let n_one = (knobs.residual_phi.one_category_frac * n_notes as f64).round() as usize;
    let mut order: Vec<usize> = (0..n_notes).collect();
    order.shuffle(&mut rng);
    for (rank, &i) in order.iter().take(n_high + n_one).enumerate() {
        let residue = if rank < n_high {
            vec![
                residual_date(&mut rng),
                residual_phone(&mut rng),
                residual_email(&mut rng),
            ]
        } else {
            let gen = match (rank - n_high) % 5 {
                0 => residual_date,
                1 => residual_phone,
                2 => residual_email,
                3 => residual_age,
                _ => residual_name,
            };
            vec![gen(&mut rng)]
        };
        let toks = &mut drafts[i].tokens;
        for r in residue {
            let at = rng.gen_range(0..=toks.len());
            toks.insert(at, Token::Residual(r));
        }
    }

    let of = |s: Split| -> Vec<usize> { (0..n_notes).filter(|&i| note_split[i] == s).collect() };
    let train = of(Split::Train);
    let mut test_pool = of(Split::Test);
    test_pool.shuffle(&mut rng);
    let mut test_pool = test_pool.into_iter();

    // Patient overlap: relabel test notes onto distinct train patients.
    let mut split_key = SplitKey::Patient;
    if knobs.patient_overlap > 0 {
        let mut train_patients: Vec<String> = train
            .iter()
            .map(|&i| drafts[i].note.patient_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        train_patients.shuffle(&mut rng);
        if train_patients.len() < knobs.patient_overlap {
            return Err(Error::InvalidArgument("not enough train patients for patient_overlap".into()));
        }
        for target in train_patients.into_iter().take(knobs.patient_overlap) {
            let i = test_pool
                .next()
                .ok_or_else(|| Error::InvalidArgument("not enough test notes for patient_overlap".into()))?;
            drafts[i].note.patient_id = target;
        }
        split_key = SplitKey::Note;
    }

    // Exact duplicates from distinct train notes.
    let needed_sources = knobs.duplicate_across_splits
        + knobs.near_duplicates.iter().map(|b| b.count).sum::<usize>();
    if needed_sources > train.len() {
        return Err(Error::InvalidArgument("not enough train notes to plant duplicates".into()));
    }
    let mut sources = train.clone();
    sources.shuffle(&mut rng);
    let mut sources = sources.into_iter();
    for _ in 0..knobs.duplicate_across_splits {
        let t = test_pool
            .next()
            .ok_or_else(|| Error::InvalidArgument("not enough test notes for duplicates".into()))?;
        let s = sources.next().expect("checked above");
        drafts[t].tokens = drafts[s].tokens.clone();
    }

    // Near-duplicate bands.
    for band in &knobs.near_duplicates {
        for _ in 0..band.count {
            let t = test_pool
                .next()
                .ok_or_else(|| Error::InvalidArgument("not enough test notes for near duplicates".into()))?;
            let s = sources.next().expect("checked above");
            drafts[t].tokens = mutate_into_band(&drafts[s].tokens, band, &vocab, &mut rng)?;
        }
    }

    let notes: Vec<Note> = drafts
        .into_iter()
        .map(|d| {
            let (text, spans) = render(&d.tokens);
            Note {
                text,
                phi_spans: spans,
                ..d.note
            }
        })
        .collect();
    let assignment: BTreeMap<String, Split> = notes
        .iter()
        .zip(&note_split)
        .map(|(n, s)| (n.note_id.clone(), *s))
        .collect();
    let corpus = Corpus::from_notes(notes)?;
    let manifest = SplitManifest {
        split_key,
        seed,
        assignment,
    };
    manifest.validate(&corpus)?;
    Ok((corpus, manifest))
}

fn mutate_into_band(
    source: &[Token],
    band: &NearDuplicateBand,
    vocab: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Token>> {
    let (src_text, _) = render(source);
    let word_slots: Vec<usize> = (0..source.len())
        .filter(|&i| matches!(source[i], Token::Word(_)))
        .collect();
    for _attempt in 0..32 {
        let mut slots = word_slots.clone();
        slots.shuffle(rng);
        let replacements: Vec<String> = slots
            .iter()
            .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
            .collect();
        let mut tokens = source.to_vec();
        for (k, &slot) in slots.iter().enumerate() {
            tokens[slot] = Token::Word(replacements[k].clone());
            let (text, _) = render(&tokens);
            let j = char_ngram_jaccard(&src_text, &text, 5);
            if j < band.max {
                if j >= band.min {
                    return Ok(tokens);
                }
                break;
            }
        }
    }
    Err(Error::InvalidArgument(format!(
        "could not construct a near duplicate in [{}, {})",
        band.min, band.max
    )))
}

fn residual_date(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{:02}/{:02}/{}",
        rng.gen_range(1..=12),
        rng.gen_range(1..=28),
        rng.gen_range(1950..=2019)
    )
}

fn residual_phone(rng: &mut ChaCha8Rng) -> String {
    format!("555-{:03}-{:04}", rng.gen_range(100..1000), rng.gen_range(0..10000))
}

fn residual_email(rng: &mut ChaCha8Rng) -> String {
    format!("pt{}@mail.example.org", rng.gen_range(100..100000))
}

fn residual_age(rng: &mut ChaCha8Rng) -> String {
    format!("{}-year-old", rng.gen_range(18..=99))
}

fn residual_name(rng: &mut ChaCha8Rng) -> String {
    const SURNAMES: &[&str] = &["Alvarez", "Okafor", "Lindqvist", "Moreau", "Tanaka", "Brennan"];
    format!("Dr. {}", SURNAMES[rng.gen_range(0..SURNAMES.len())])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let k = FixtureKnobs {
            icd_empty_frac: 0.1,
            duplicate_across_splits: 2,
            ..Default::default()
        };
        let (a, ma) = make_fixture(40, 2, 7, &k).unwrap();
        let (b, mb) = make_fixture(40, 2, 7, &k).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        assert_eq!(ma.to_json(), mb.to_json());
        let (c, _) = make_fixture(40, 2, 8, &k).unwrap();
        assert_ne!(a.to_jsonl(), c.to_jsonl());
    }

    fn cross_split_duplicates(corpus: &Corpus, m: &SplitManifest) -> usize {
        let train: BTreeSet<&str> = m
            .members(Split::Train)
            .into_iter()
            .map(|id| corpus.get(id).unwrap().text.as_str())
            .collect();
        m.members(Split::Test)
            .into_iter()
            .filter(|id| train.contains(corpus.get(id).unwrap().text.as_str()))
            .count()
    }

    #[test]
    fn duplicate_knob_plants_exactly_k() {
        for k in [0, 1, 5] {
            let knobs = FixtureKnobs {
                duplicate_across_splits: k,
                ..Default::default()
            };
            let (c, m) = make_fixture(120, 1, 11, &knobs).unwrap();
            assert_eq!(cross_split_duplicates(&c, &m), k, "k={k}");
        }
    }

    #[test]
    fn split_ratio_counts_70_15_15() {
        let (_, m) = make_fixture(100, 1, 3, &FixtureKnobs::default()).unwrap();
        let counts = m.counts();
        assert_eq!(counts[&Split::Train], 70);
        assert_eq!(counts[&Split::Val], 15);
        assert_eq!(counts[&Split::Test], 15);
        assert_eq!(m.split_key, SplitKey::Patient);
    }

    #[test]
    fn icd_empty_rate_matches_binomial_expectation() {
        let knobs = FixtureKnobs {
            icd_empty_frac: 0.045,
            words_per_note: (5, 10),
            ..Default::default()
        };
        let (c, _) = make_fixture(10_000, 1, 21, &knobs).unwrap();
        let empty = c.iter().filter(|n| n.icd_codes.is_empty()).count() as f64;
        let n = c.len() as f64;
        let sd = (n * 0.045 * 0.955).sqrt();
        // Four standard deviations of the binomial count.
        assert!((empty - 0.045 * n).abs() < 4.0 * sd, "empty={empty}");
    }

    #[test]
    fn near_duplicate_band_is_exact() {
        let band = NearDuplicateBand {
            min: 0.5,
            max: 0.7,
            count: 3,
        };
        let knobs = FixtureKnobs {
            near_duplicates: vec![band],
            ..Default::default()
        };
        let (c, m) = make_fixture(100, 1, 5, &knobs).unwrap();
        let train: Vec<&Note> = m.members(Split::Train).into_iter().map(|id| c.get(id).unwrap()).collect();
        let in_band = m
            .members(Split::Test)
            .into_iter()
            .filter(|id| {
                let t = &c.get(id).unwrap().text;
                let best = train
                    .iter()
                    .map(|n| char_ngram_jaccard(t, &n.text, 5))
                    .fold(0.0, f64::max);
                (0.5..0.7).contains(&best)
            })
            .count();
        assert_eq!(in_band, 3);
    }

    #[test]
    fn overlap_knob_switches_to_note_key() {
        let knobs = FixtureKnobs {
            patient_overlap: 3,
            ..Default::default()
        };
        let (c, m) = make_fixture(60, 1, 9, &knobs).unwrap();
        assert_eq!(m.split_key, SplitKey::Note);
        assert_eq!(m.patients_in_multiple_splits(&c).len(), 3);
    }

    #[test]
    fn spans_point_at_placeholders() {
        let (c, _) = make_fixture(20, 2, 1, &FixtureKnobs::default()).unwrap();
        for note in &c {
            let chars: Vec<char> = note.text.chars().collect();
            for s in &note.phi_spans {
                let covered: String = chars[s.start..s.end].iter().collect();
                assert_eq!(covered, format!("[{}]", s.category.as_str()));
            }
        }
    }

    #[test]
    fn rejects_zero_patients() {
        assert!(make_fixture(0, 1, 1, &FixtureKnobs::default()).is_err());
    }
}
