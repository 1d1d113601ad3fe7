//! Text similarity: token Jaccard, character n-gram Jaccard and MinHash.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NGRAM: usize = 5;
pub const DEFAULT_MINHASH_K: usize = 128;
pub const DEFAULT_BANDS: usize = 32;
pub const DEFAULT_ROWS: usize = 4;
pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.30, 0.50, 0.70, 0.85];

const MINHASH_SEED: u64 = 0x6D69_6E68_6173_6831;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimilarityMethod {
    TokenJaccard,
    CharNgramJaccard { n: usize },
    /// MinHash over character n-grams; `bands * rows` must equal `k`.
    MinhashEstimate {
        k: usize,
        n: usize,
        bands: usize,
        rows: usize,
    },
}

impl SimilarityMethod {
    pub fn minhash_default() -> Self {
        SimilarityMethod::MinhashEstimate {
            k: DEFAULT_MINHASH_K,
            n: DEFAULT_NGRAM,
            bands: DEFAULT_BANDS,
            rows: DEFAULT_ROWS,
        }
    }

    pub fn label(&self) -> String {
        match self {
            SimilarityMethod::TokenJaccard => "token_jaccard".into(),
            SimilarityMethod::CharNgramJaccard { n } => format!("char_ngram_jaccard(n={n})"),
            SimilarityMethod::MinhashEstimate { k, n, bands, rows } => {
                format!("minhash_estimate(k={k},n={n},bands={bands},rows={rows})")
            }
        }
    }
}

impl Default for SimilarityMethod {
    fn default() -> Self {
        SimilarityMethod::CharNgramJaccard { n: DEFAULT_NGRAM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub method: SimilarityMethod,
    pub thresholds: Vec<f64>,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            method: SimilarityMethod::default(),
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

impl SimilarityConfig {
    pub fn new(method: SimilarityMethod, thresholds: Vec<f64>) -> Result<Self> {
        let cfg = SimilarityConfig { method, thresholds };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.thresholds.is_empty() {
            return bad("at least one threshold is required".into());
        }
        for t in &self.thresholds {
            if !(*t > 0.0 && *t <= 1.0) {
                return bad(format!("threshold {t} outside (0, 1]"));
            }
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return bad("thresholds must be strictly increasing".into());
        }
        match self.method {
            SimilarityMethod::TokenJaccard => {}
            SimilarityMethod::CharNgramJaccard { n } if n < 2 => return bad("n-gram size must be at least 2".into()),
            SimilarityMethod::CharNgramJaccard { .. } => {}
            SimilarityMethod::MinhashEstimate { k, n, bands, rows } => {
                if n < 2 {
                    return bad("n-gram size must be at least 2".into());
                }
                if k < 16 {
                    return bad("minhash needs k >= 16".into());
                }
                if bands * rows != k {
                    return bad(format!("bands ({bands}) x rows ({rows}) must equal k ({k})"));
                }
            }
        }
        Ok(())
    }
}

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Lowercase and collapse whitespace runs to one space.
fn normalize(text: &str) -> Vec<char> {
    let mut out = Vec::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Character n-grams over normalized text. Texts shorter than `n` yield the
/// whole text as a single shingle.
pub fn char_ngrams(text: &str, n: usize) -> HashSet<String> {
    let chars = normalize(text);
    if chars.is_empty() {
        return HashSet::new();
    }
    if chars.len() < n {
        return std::iter::once(chars.iter().collect()).collect();
    }
    chars.windows(n).map(|w| w.iter().collect()).collect()
}

fn jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let sa: HashSet<String> = tokenize(a).collect();
    let sb: HashSet<String> = tokenize(b).collect();
    jaccard(&sa, &sb)
}

pub fn char_ngram_jaccard(a: &str, b: &str, n: usize) -> f64 {
    jaccard(&char_ngrams(a, n), &char_ngrams(b, n))
}

/// 64-bit FNV-1a.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Shingle fingerprints as a sorted, deduplicated vector.
pub(crate) fn shingle_hashes(text: &str, method: &SimilarityMethod) -> Vec<u64> {
    let mut v: Vec<u64> = match method {
        SimilarityMethod::TokenJaccard => tokenize(text).map(|t| fnv1a(t.as_bytes())).collect(),
        SimilarityMethod::CharNgramJaccard { n } | SimilarityMethod::MinhashEstimate { n, .. } => {
            char_ngrams(text, *n).iter().map(|s| fnv1a(s.as_bytes())).collect()
        }
    };
    v.sort_unstable();
    v.dedup();
    v
}

/// Jaccard of two sorted, deduplicated fingerprint vectors.
pub(crate) fn sorted_jaccard(a: &[u64], b: &[u64]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Seeded MinHash family over character n-gram fingerprints.
#[derive(Debug, Clone)]
pub struct MinHasher {
    n: usize,
    seeds: Vec<u64>,
}

impl MinHasher {
    pub fn new(k: usize, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(MINHASH_SEED);
        MinHasher {
            n,
            seeds: (0..k).map(|_| rng.gen()).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.seeds.len()
    }

    /// Signature of a fingerprint set; empty sets give all `u64::MAX`.
    pub fn signature_of(&self, fingerprints: &[u64]) -> Vec<u64> {
        self.seeds
            .iter()
            .map(|&s| {
                fingerprints
                    .iter()
                    .map(|&f| mix64(f ^ s))
                    .min()
                    .unwrap_or(u64::MAX)
            })
            .collect()
    }

    pub fn signature(&self, text: &str) -> Vec<u64> {
        let fp = shingle_hashes(text, &SimilarityMethod::CharNgramJaccard { n: self.n });
        self.signature_of(&fp)
    }

    /// Fraction of agreeing signature slots.
    pub fn estimate(a: &[u64], b: &[u64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        if a.is_empty() {
            return 0.0;
        }
        a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
    }
}

/// Similarity of two texts in `[0, 1]`; symmetric, 1 for identical texts.
/// Both-empty inputs score 1, exactly one empty scores 0.
pub fn similarity(a: &str, b: &str, cfg: &SimilarityConfig) -> f64 {
    match cfg.method {
        SimilarityMethod::TokenJaccard => token_jaccard(a, b),
        SimilarityMethod::CharNgramJaccard { n } => char_ngram_jaccard(a, b, n),
        SimilarityMethod::MinhashEstimate { k, n, .. } => {
            let ea = normalize(a).is_empty();
            let eb = normalize(b).is_empty();
            match (ea, eb) {
                (true, true) => 1.0,
                (true, false) | (false, true) => 0.0,
                _ => {
                    let h = MinHasher::new(k, n);
                    MinHasher::estimate(&h.signature(a), &h.signature(b))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(method: SimilarityMethod) -> SimilarityConfig {
        SimilarityConfig {
            method,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }

    fn methods() -> Vec<SimilarityMethod> {
        vec![
            SimilarityMethod::TokenJaccard,
            SimilarityMethod::CharNgramJaccard { n: 5 },
            SimilarityMethod::minhash_default(),
        ]
    }

    #[test]
    fn identical_is_one() {
        for m in methods() {
            assert_eq!(similarity("same text here", "same text here", &cfg(m)), 1.0);
        }
    }

    #[test]
    fn token_jaccard_hand_example() {
        let s = similarity("alpha beta gamma", "alpha beta delta", &cfg(SimilarityMethod::TokenJaccard));
        assert_eq!(s, 0.5);
    }

    #[test]
    fn disjoint_vocabulary_is_zero() {
        for m in methods() {
            assert_eq!(similarity("aaaaaa bbbbbb", "cccccc dddddd", &cfg(m)), 0.0, "{m:?}");
        }
    }

    #[test]
    fn empty_text_rules() {
        for m in methods() {
            assert_eq!(similarity("", "", &cfg(m)), 1.0);
            assert_eq!(similarity("", "abc def", &cfg(m)), 0.0);
        }
    }

    #[test]
    fn tokenization_lowercases_and_splits_punctuation() {
        let toks: Vec<String> = tokenize("BP 120/80, HR-72; ok").collect();
        assert_eq!(toks, ["bp", "120", "80", "hr", "72", "ok"]);
    }

    #[test]
    fn short_text_is_one_shingle() {
        let s = char_ngrams("Ab", 5);
        assert_eq!(s.len(), 1);
        assert!(s.contains("ab"));
    }

    #[test]
    fn sorted_jaccard_matches_set_jaccard() {
        let a = "the quick brown fox jumps";
        let b = "the quick brown cat jumps high";
        let m = SimilarityMethod::CharNgramJaccard { n: 3 };
        let exact = char_ngram_jaccard(a, b, 3);
        let fast = sorted_jaccard(&shingle_hashes(a, &m), &shingle_hashes(b, &m));
        assert!((exact - fast).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(SimilarityConfig::new(SimilarityMethod::default(), vec![0.5, 0.5]).is_err());
        assert!(SimilarityConfig::new(SimilarityMethod::default(), vec![0.0]).is_err());
        assert!(SimilarityConfig::new(SimilarityMethod::CharNgramJaccard { n: 1 }, vec![0.5]).is_err());
        let small = SimilarityMethod::MinhashEstimate { k: 8, n: 5, bands: 2, rows: 4 };
        assert!(SimilarityConfig::new(small, vec![0.5]).is_err());
        assert!(SimilarityConfig::new(SimilarityMethod::minhash_default(), vec![0.7, 0.8, 0.9]).is_ok());
    }
}
