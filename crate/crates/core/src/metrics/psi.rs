use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Note};
use crate::dat::DatTable;
use crate::error::{Error, Result};

/// Mass given to an empty bin before renormalizing.
pub const PSI_EPSILON: f64 = 1e-6;
pub const LENGTH_BIN_WIDTH: usize = 100;
/// 20 bins of 100 tokens below 2000 plus one overflow bin.
pub const LENGTH_BINS: usize = 21;

const NONE_BIN: &str = "(none)";

fn smooth(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    let p: Vec<f64> = counts.iter().map(|&c| if total > 0.0 { c / total } else { 0.0 }).collect();
    if p.iter().all(|&x| x > 0.0) {
        return p;
    }
    let bumped: Vec<f64> = p.iter().map(|&x| if x > 0.0 { x } else { PSI_EPSILON }).collect();
    let s: f64 = bumped.iter().sum();
    bumped.into_iter().map(|x| x / s).collect()
}

/// Population stability index of `period` against `baseline`. Inputs are
/// counts or masses and are normalized; empty bins receive
/// [`PSI_EPSILON`] before renormalization.
pub fn psi(baseline: &[f64], period: &[f64]) -> Result<f64> {
    if baseline.len() != period.len() {
        return Err(Error::LengthMismatch {
            left: baseline.len(),
            right: period.len(),
        });
    }
    if baseline.iter().chain(period).any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::InvalidArgument("histogram masses must be finite and non-negative".into()));
    }
    let p = smooth(baseline);
    let q = smooth(period);
    Ok(p.iter().zip(&q).map(|(&p, &q)| (q - p) * (q / p).ln()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftFeature {
    #[serde(alias = "icd_histogram")]
    Icd,
    #[serde(alias = "note_type_histogram")]
    NoteType,
    #[serde(alias = "length_histogram")]
    Length,
}

impl DriftFeature {
    pub fn as_str(self) -> &'static str {
        match self {
            DriftFeature::Icd => "icd",
            DriftFeature::NoteType => "note_type",
            DriftFeature::Length => "length",
        }
    }

    fn length_bin(note: &Note) -> usize {
        (note.token_count() / LENGTH_BIN_WIDTH).min(LENGTH_BINS - 1)
    }

    fn length_label(bin: usize) -> String {
        if bin == LENGTH_BINS - 1 {
            format!("{}+", bin * LENGTH_BIN_WIDTH)
        } else {
            format!("{}-{}", bin * LENGTH_BIN_WIDTH, (bin + 1) * LENGTH_BIN_WIDTH - 1)
        }
    }

    /// Categorical counts for one group of notes. ICD counts each code once
    /// per note; notes without codes fall in `(none)`.
    fn counts<'a>(self, notes: impl Iterator<Item = &'a Note>) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for n in notes {
            match self {
                DriftFeature::Icd => {
                    if n.icd_codes.is_empty() {
                        *out.entry(NONE_BIN.to_string()).or_default() += 1;
                    }
                    for c in &n.icd_codes {
                        *out.entry(c.clone()).or_default() += 1;
                    }
                }
                DriftFeature::NoteType => {
                    let k = n.note_type.as_ref().map_or(NONE_BIN, |t| t.as_str());
                    *out.entry(k.to_string()).or_default() += 1;
                }
                DriftFeature::Length => {
                    *out.entry(Self::length_label(Self::length_bin(n))).or_default() += 1;
                }
            }
        }
        out
    }
}

impl fmt::Display for DriftFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DriftFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "icd" | "icd_histogram" => Ok(DriftFeature::Icd),
            "note_type" | "note_type_histogram" => Ok(DriftFeature::NoteType),
            "length" | "length_histogram" => Ok(DriftFeature::Length),
            _ => Err(Error::UnknownField(s.to_string())),
        }
    }
}

/// Baseline and period counts over a shared bin list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<String>,
    pub baseline: Vec<u64>,
    pub period: Vec<u64>,
}

impl Histogram {
    fn align(feature: DriftFeature, base: &BTreeMap<String, u64>, period: &BTreeMap<String, u64>) -> Self {
        let bins: Vec<String> = if feature == DriftFeature::Length {
            (0..LENGTH_BINS).map(DriftFeature::length_label).collect()
        } else {
            let mut b: Vec<String> = base.keys().chain(period.keys()).cloned().collect();
            b.sort();
            b.dedup();
            b
        };
        let get = |m: &BTreeMap<String, u64>| bins.iter().map(|b| m.get(b).copied().unwrap_or(0)).collect();
        Histogram {
            baseline: get(base),
            period: get(period),
            bins,
        }
    }

    pub fn psi(&self) -> Result<f64> {
        let f = |v: &[u64]| v.iter().map(|&c| c as f64).collect::<Vec<_>>();
        psi(&f(&self.baseline), &f(&self.period))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub period: String,
    pub psi: f64,
    pub n_baseline: usize,
    pub n_period: usize,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiTrace {
    pub feature: DriftFeature,
    pub baseline: String,
    pub points: Vec<DriftPoint>,
}

impl PsiTrace {
    /// Header `year psi`, PSI to four decimals.
    pub fn to_dat(&self) -> DatTable {
        let mut t = DatTable::new(["year", "psi"]);
        for p in &self.points {
            t.push([p.period.clone(), format!("{:.4}", p.psi)]);
        }
        t
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].psi >= w[0].psi)
    }
}

/// PSI of each admission-year period against the baseline year.
pub fn psi_trace(corpus: &Corpus, feature: DriftFeature, baseline: i32, periods: &[i32]) -> Result<PsiTrace> {
    if corpus.iter().all(|n| n.admission_year.is_none()) {
        return Err(Error::FeatureUnavailable("admission_year".into()));
    }
    let group = |y: i32| -> Result<(usize, BTreeMap<String, u64>)> {
        let notes: Vec<&Note> = corpus.iter().filter(|n| n.admission_year == Some(y)).collect();
        if notes.is_empty() {
            return Err(Error::EmptyPeriod(y.to_string()));
        }
        Ok((notes.len(), feature.counts(notes.into_iter())))
    };
    let (n_base, base) = group(baseline)?;
    let points = periods
        .iter()
        .map(|&y| {
            let (n_period, counts) = group(y)?;
            let histogram = Histogram::align(feature, &base, &counts);
            Ok(DriftPoint {
                period: y.to_string(),
                psi: histogram.psi()?,
                n_baseline: n_base,
                n_period,
                histogram,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PsiTrace {
        feature,
        baseline: baseline.to_string(),
        points,
    })
}

/// Token-length histogram with header `bin_mid count`.
pub fn length_histogram_dat(corpus: &Corpus) -> DatTable {
    let mut counts = [0u64; LENGTH_BINS];
    for n in corpus.iter() {
        counts[DriftFeature::length_bin(n)] += 1;
    }
    let mut t = DatTable::new(["bin_mid", "count"]);
    for (i, c) in counts.iter().enumerate() {
        t.push([(i * LENGTH_BIN_WIDTH + LENGTH_BIN_WIDTH / 2).to_string(), c.to_string()]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_fixture, FixtureKnobs};
    use proptest::prelude::*;

    #[test]
    fn two_bin_closed_form() {
        let closed = 0.3 * 1.6f64.ln() + (-0.3) * 0.4f64.ln();
        let v = psi(&[0.5, 0.5], &[0.8, 0.2]).unwrap();
        assert!((v - closed).abs() < 1e-12);
        assert!((v - 0.4158883).abs() < 1e-7);
    }

    #[test]
    fn swapping_arguments_gives_same_value() {
        // (q - p) ln(q / p) is unchanged when p and q trade places.
        let a = psi(&[0.5, 0.3, 0.2], &[0.1, 0.1, 0.8]).unwrap();
        let b = psi(&[0.1, 0.1, 0.8], &[0.5, 0.3, 0.2]).unwrap();
        assert!((a - b).abs() < 1e-12);
        let a = psi(&[1.0, 0.0, 3.0], &[2.0, 2.0, 0.0]).unwrap();
        let b = psi(&[2.0, 2.0, 0.0], &[1.0, 0.0, 3.0]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn zero_bins_are_smoothed() {
        let v = psi(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!(v.is_finite() && v > 0.0);
        assert_eq!(psi(&[3.0, 0.0], &[6.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_lengths() {
        assert!(matches!(psi(&[1.0], &[0.5, 0.5]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn trace_errors() {
        let (c, _) = make_fixture(
            20,
            2,
            1,
            &FixtureKnobs {
                admission_year_missing_frac: 1.0,
                ..FixtureKnobs::default()
            },
        )
        .unwrap();
        assert!(matches!(psi_trace(&c, DriftFeature::Icd, 2010, &[2011]), Err(Error::FeatureUnavailable(_))));
        let (c, _) = make_fixture(20, 2, 1, &FixtureKnobs::default()).unwrap();
        assert!(matches!(psi_trace(&c, DriftFeature::Icd, 2010, &[1990]), Err(Error::EmptyPeriod(y)) if y == "1990"));
    }

    #[test]
    fn baseline_against_itself_is_zero() {
        let (c, _) = make_fixture(200, 2, 3, &FixtureKnobs::default()).unwrap();
        for f in [DriftFeature::Icd, DriftFeature::NoteType, DriftFeature::Length] {
            let t = psi_trace(&c, f, 2010, &[2010]).unwrap();
            assert!(t.points[0].psi.abs() <= 1e-12);
        }
    }

    #[test]
    fn length_dat_shape() {
        let (c, _) = make_fixture(30, 2, 3, &FixtureKnobs::default()).unwrap();
        let s = length_histogram_dat(&c).render();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "bin_mid count");
        assert_eq!(lines.len(), 1 + LENGTH_BINS);
        assert_eq!(lines[1], "50 60");
        assert_eq!(lines[21], "2050 0");
    }

    proptest! {
        #[test]
        fn nonnegative_and_zero_on_equal(p in proptest::collection::vec(0u32..50, 1..12), q in proptest::collection::vec(0u32..50, 1..12)) {
            let n = p.len().min(q.len());
            let p: Vec<f64> = p[..n].iter().map(|&x| x as f64).collect();
            let q: Vec<f64> = q[..n].iter().map(|&x| x as f64).collect();
            prop_assert!(psi(&p, &q).unwrap() >= 0.0);
            prop_assert!(psi(&p, &p).unwrap().abs() <= 1e-12);
        }
    }
}
