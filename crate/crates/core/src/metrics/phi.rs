use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::RegexSet;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::dat::DatTable;
use crate::digest::canonical_hash;
use crate::error::{Error, Result};

pub const MAX_RISK: u8 = 8;

pub const DEFAULT_PATTERNS_JSON: &str = include_str!("../../assets/phi_patterns_v1.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PatternDefs {
    version: String,
    categories: BTreeMap<String, Vec<String>>,
}

/// Named categories of regular expressions. A note's risk is the number of
/// distinct categories with at least one match.
#[derive(Debug, Clone)]
pub struct PatternSet {
    defs: PatternDefs,
    compiled: Vec<(String, RegexSet)>,
    hash: String,
}

impl PatternSet {
    pub fn new(version: impl Into<String>, categories: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let defs = PatternDefs {
            version: version.into(),
            categories,
        };
        let compiled = defs
            .categories
            .iter()
            .map(|(cat, exprs)| {
                RegexSet::new(exprs)
                    .map(|set| (cat.clone(), set))
                    .map_err(|e| Error::InvalidPattern {
                        category: cat.clone(),
                        message: e.to_string(),
                    })
            })
            .collect::<Result<_>>()?;
        let hash = canonical_hash(&defs);
        Ok(PatternSet { defs, compiled, hash })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let defs: PatternDefs =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("pattern file: {e}")))?;
        PatternSet::new(defs.version, defs.categories)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PatternSet::from_json(&text)
    }

    /// The shipped pattern families.
    pub fn default_set() -> Self {
        PatternSet::from_json(DEFAULT_PATTERNS_JSON).expect("shipped patterns compile")
    }

    pub fn version(&self) -> &str {
        &self.defs.version
    }

    /// Hash of the canonical pattern definitions.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.defs.categories.keys().map(String::as_str)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.defs).expect("patterns serialize") + "\n"
    }

    /// Categories with at least one match in `text`, sorted.
    pub fn matched(&self, text: &str) -> Vec<&str> {
        self.compiled
            .iter()
            .filter(|(_, set)| set.is_match(text))
            .map(|(c, _)| c.as_str())
            .collect()
    }

    pub fn risk(&self, text: &str) -> u8 {
        (self.matched(text).len() as u8).min(MAX_RISK)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub sample_size: usize,
    pub seed: u64,
    pub note_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiRiskResult {
    pub pattern_version: String,
    pub pattern_hash: String,
    pub per_note: BTreeMap<String, u8>,
    pub histogram: Vec<u64>,
    pub mean_proxy: f64,
    pub n_high_risk: usize,
    pub frac_high_risk: f64,
    pub threshold: u8,
    pub sampling_plan: SamplingPlan,
}

impl PhiRiskResult {
    /// Header `risk count`, one row per risk level 0 through 8.
    pub fn to_dat(&self) -> DatTable {
        let mut t = DatTable::new(["risk", "count"]);
        for (r, c) in self.histogram.iter().enumerate() {
            t.push([r.to_string(), c.to_string()]);
        }
        t
    }
}

/// Scans every note and draws a review sample: notes are shuffled with
/// `seed`, then stably ordered by descending risk, and the first
/// `sample_size` are taken.
pub fn phi_risk_scan(
    corpus: &Corpus,
    patterns: &PatternSet,
    high_risk_threshold: u8,
    sample_size: usize,
    seed: u64,
) -> Result<PhiRiskResult> {
    if sample_size > corpus.len() {
        return Err(Error::InvalidArgument(format!(
            "sample size {sample_size} exceeds corpus size {}",
            corpus.len()
        )));
    }
    let risks: Vec<(&str, u8)> = corpus
        .notes()
        .par_iter()
        .map(|n| (n.note_id.as_str(), patterns.risk(&n.text)))
        .collect();
    let mut histogram = vec![0u64; MAX_RISK as usize + 1];
    for &(_, r) in &risks {
        histogram[r as usize] += 1;
    }
    let n = risks.len();
    let total: u64 = risks.iter().map(|&(_, r)| r as u64).sum();
    let n_high_risk = risks.iter().filter(|&&(_, r)| r >= high_risk_threshold).count();

    let mut order: Vec<(&str, u8)> = risks.clone();
    order.sort_by(|a, b| a.0.cmp(b.0));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|x| std::cmp::Reverse(x.1));
    let note_ids = order.iter().take(sample_size).map(|(id, _)| id.to_string()).collect();

    let ratio = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
    Ok(PhiRiskResult {
        pattern_version: patterns.version().to_string(),
        pattern_hash: patterns.hash().to_string(),
        per_note: risks.into_iter().map(|(id, r)| (id.to_string(), r)).collect(),
        histogram,
        mean_proxy: ratio(total as f64),
        n_high_risk,
        frac_high_risk: ratio(n_high_risk as f64),
        threshold: high_risk_threshold,
        sampling_plan: SamplingPlan {
            sample_size,
            seed,
            note_ids,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_fixture, FixtureKnobs, ResidualPhi};
    use proptest::prelude::*;

    #[test]
    fn default_patterns_cover_ten_categories() {
        let p = PatternSet::default_set();
        assert_eq!(p.categories().count(), 10);
        assert_eq!(p.hash().len(), 64);
    }

    #[test]
    fn clean_text_is_zero() {
        assert_eq!(PatternSet::default_set().risk("patient resting comfortably, no acute distress"), 0);
    }

    #[test]
    fn date_phone_email_is_three() {
        let p = PatternSet::default_set();
        let text = "seen 03/14/2012, call 555-201-3344 or mail jdoe@example.org";
        assert_eq!(p.matched(text), vec!["date", "email", "phone"]);
        assert_eq!(p.risk(text), 3);
    }

    #[test]
    fn each_family_fires() {
        let p = PatternSet::default_set();
        for (text, cat) in [
            ("a 64-year-old man", "age"),
            ("device SN: AB12-99887", "device"),
            ("admitted to St Vincent Hospital", "hospital"),
            ("MRN 00123456", "id"),
            ("lives at 12 Maple Street", "location"),
            ("seen by Dr. Moreau", "name"),
            ("works as a carpenter", "profession"),
        ] {
            assert_eq!(p.matched(text), vec![cat], "{text}");
        }
    }

    #[test]
    fn fixture_placeholders_do_not_fire() {
        let (c, _) = make_fixture(100, 3, 2, &FixtureKnobs::default()).unwrap();
        let r = phi_risk_scan(&c, &PatternSet::default_set(), 3, 10, 1).unwrap();
        assert_eq!(r.mean_proxy, 0.0);
    }

    #[test]
    fn cap_at_eight() {
        let cats: BTreeMap<String, Vec<String>> = (0..10).map(|i| (format!("c{i}"), vec!["x".to_string()])).collect();
        assert_eq!(PatternSet::new("t", cats).unwrap().risk("x"), 8);
    }

    #[test]
    fn invalid_pattern_named() {
        let cats = BTreeMap::from([("bad".to_string(), vec!["(".to_string()])]);
        assert!(matches!(PatternSet::new("t", cats), Err(Error::InvalidPattern { category, .. }) if category == "bad"));
    }

    #[test]
    fn sample_prioritizes_risk_and_is_seeded() {
        let knobs = FixtureKnobs {
            residual_phi: ResidualPhi {
                one_category_frac: 0.1,
                high_risk_frac: 0.02,
            },
            ..FixtureKnobs::default()
        };
        let (c, _) = make_fixture(200, 5, 9, &knobs).unwrap();
        let p = PatternSet::default_set();
        let r = phi_risk_scan(&c, &p, 3, 30, 4).unwrap();
        assert_eq!(r.n_high_risk, 20);
        assert!(r.sampling_plan.note_ids[..20].iter().all(|id| r.per_note[id] >= 3));
        assert!(r.sampling_plan.note_ids[20..].iter().all(|id| r.per_note[id] == 1));
        assert_eq!(r, phi_risk_scan(&c, &p, 3, 30, 4).unwrap());
        assert_ne!(r.sampling_plan, phi_risk_scan(&c, &p, 3, 30, 5).unwrap().sampling_plan);
        assert!(phi_risk_scan(&c, &p, 3, 5000, 4).is_err());
        assert_eq!(r.to_dat().render().lines().count(), 10);
    }

    proptest! {
        #[test]
        fn adding_a_category_never_lowers_risk(text in "[a-z0-9@./ -]{0,60}", extra in "[a-z0-9]{1,3}") {
            let base = PatternSet::default_set();
            let mut cats = base.defs.categories.clone();
            cats.insert("zz_extra".into(), vec![regex::escape(&extra)]);
            let more = PatternSet::new("t", cats).unwrap();
            prop_assert!(more.risk(&text) >= base.risk(&text));
        }
    }
}
