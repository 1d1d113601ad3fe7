use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaStatistic {
    CohenKappa,
    FleissKappa,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub b: usize,
    pub seed: u64,
    /// Two-sided coverage, e.g. 0.95.
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            b: 1000,
            seed: 0,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub statistic: KappaStatistic,
    pub value: f64,
    pub p_o: f64,
    pub p_e: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_items: usize,
    pub n_raters: usize,
    pub bootstrap_b: usize,
    pub seed: u64,
}

/// Annotation designs accepted in metric inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum Annotations {
    /// Two raters labelling the same items.
    Pairwise { labels_a: Vec<String>, labels_b: Vec<String> },
    /// Items x categories matrix of rater counts.
    Counts { ratings: Vec<Vec<u64>> },
}

impl Annotations {
    pub fn agreement(&self, cfg: &BootstrapConfig) -> Result<AgreementResult> {
        match self {
            Annotations::Pairwise { labels_a, labels_b } => cohen_kappa(labels_a, labels_b, cfg),
            Annotations::Counts { ratings } => fleiss_kappa(ratings, cfg),
        }
    }
}

/// `(p_o - p_e) / (1 - p_e)`.
pub fn kappa_from_proportions(p_o: f64, p_e: f64) -> Result<f64> {
    if p_e >= 1.0 {
        return if p_o >= 1.0 { Ok(1.0) } else { Err(Error::DegenerateMarginals) };
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Cohen's kappa from a square confusion table (rows: rater A, columns:
/// rater B). Returns `(kappa, p_o, p_e)`.
pub fn kappa_from_confusion(table: &[Vec<u64>]) -> Result<(f64, f64, f64)> {
    let k = table.len();
    if let Some(row) = table.iter().find(|r| r.len() != k) {
        return Err(Error::LengthMismatch {
            left: k,
            right: row.len(),
        });
    }
    let n: u64 = table.iter().flatten().sum();
    if n == 0 {
        return Err(Error::InsufficientItems { needed: 1, got: 0 });
    }
    let agree: u64 = (0..k).map(|i| table[i][i]).sum();
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..k).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let s: u128 = rows.iter().zip(&cols).map(|(&a, &b)| a as u128 * b as u128).sum();
    cohen_exact(agree as u128, s, n as u128)
}

/// kappa = (A n - S) / (n^2 - S) where A counts agreements and S is the
/// sum over categories of the product of marginal counts.
fn cohen_exact(agree: u128, s: u128, n: u128) -> Result<(f64, f64, f64)> {
    let nn = n * n;
    let p_o = agree as f64 / n as f64;
    let p_e = s as f64 / nn as f64;
    if s == nn {
        return if agree == n {
            Ok((1.0, p_o, p_e))
        } else {
            Err(Error::DegenerateMarginals)
        };
    }
    let num = (agree * n) as i128 - s as i128;
    let den = (nn - s) as i128;
    Ok((num as f64 / den as f64, p_o, p_e))
}

fn cohen_indexed(a: &[usize], b: &[usize], k: usize, items: impl Iterator<Item = usize>) -> Result<(f64, f64, f64)> {
    let mut ra = vec![0u64; k];
    let mut rb = vec![0u64; k];
    let (mut agree, mut n) = (0u128, 0u128);
    for i in items {
        ra[a[i]] += 1;
        rb[b[i]] += 1;
        agree += (a[i] == b[i]) as u128;
        n += 1;
    }
    let s = ra.iter().zip(&rb).map(|(&x, &y)| x as u128 * y as u128).sum();
    cohen_exact(agree, s, n)
}

/// Percentile interval over bootstrap replicates, widened if needed so it
/// contains the point estimate.
fn percentile_ci(mut reps: Vec<f64>, level: f64, value: f64) -> (f64, f64) {
    reps.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (reps.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        reps[lo] + (h - lo as f64) * (reps[hi] - reps[lo])
    };
    let alpha = (1.0 - level) / 2.0;
    (q(alpha).min(value), q(1.0 - alpha).max(value))
}

/// Draws `cfg.b` replicates in parallel; replicate `r` uses stream `r` of
/// the seeded generator so the result does not depend on scheduling.
fn bootstrap<F>(n: usize, cfg: &BootstrapConfig, stat: F) -> Result<Vec<f64>>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    (0..cfg.b)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            stat(&idx)
        })
        .collect()
}

fn check_cfg(cfg: &BootstrapConfig) -> Result<()> {
    if cfg.b == 0 {
        return Err(Error::InvalidArgument("bootstrap B must be positive".into()));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::InvalidArgument(format!("CI level {} not in (0, 1)", cfg.level)));
    }
    Ok(())
}

/// Cohen's kappa for two raters with a percentile bootstrap CI over items.
pub fn cohen_kappa<T: Ord>(labels_a: &[T], labels_b: &[T], cfg: &BootstrapConfig) -> Result<AgreementResult> {
    check_cfg(cfg)?;
    if labels_a.len() != labels_b.len() {
        return Err(Error::LengthMismatch {
            left: labels_a.len(),
            right: labels_b.len(),
        });
    }
    let n = labels_a.len();
    if n == 0 {
        return Err(Error::InsufficientItems { needed: 1, got: 0 });
    }
    let mut cats: BTreeMap<&T, usize> = BTreeMap::new();
    for l in labels_a.iter().chain(labels_b) {
        let next = cats.len();
        cats.entry(l).or_insert(next);
    }
    let a: Vec<usize> = labels_a.iter().map(|l| cats[l]).collect();
    let b: Vec<usize> = labels_b.iter().map(|l| cats[l]).collect();
    let k = cats.len();
    let (value, p_o, p_e) = cohen_indexed(&a, &b, k, 0..n)?;
    let reps = bootstrap(n, cfg, |idx| cohen_indexed(&a, &b, k, idx.iter().copied()).map(|r| r.0))?;
    let (ci_low, ci_high) = percentile_ci(reps, cfg.level, value);
    Ok(AgreementResult {
        statistic: KappaStatistic::CohenKappa,
        value,
        p_o,
        p_e,
        ci_low,
        ci_high,
        n_items: n,
        n_raters: 2,
        bootstrap_b: cfg.b,
        seed: cfg.seed,
    })
}

/// Fleiss' kappa in exact integer form. With N items, m raters per item,
/// Q the sum of squared cell counts and C the sum of squared column totals:
/// kappa = ((Q - Nm) Nm - C (m - 1)) / ((Nm)^2 (m - 1) - C (m - 1)).
fn fleiss_exact(ratings: &[Vec<u64>], m: u64, items: impl Iterator<Item = usize>) -> Result<(f64, f64, f64)> {
    let k = ratings.first().map_or(0, Vec::len);
    let mut cols = vec![0u128; k];
    let (mut q, mut n_items) = (0u128, 0u128);
    for i in items {
        for (j, &c) in ratings[i].iter().enumerate() {
            cols[j] += c as u128;
            q += c as u128 * c as u128;
        }
        n_items += 1;
    }
    let m = m as u128;
    let nm = n_items * m;
    let c: u128 = cols.iter().map(|x| x * x).sum();
    let p_bar = (q - nm) as f64 / (nm * (m - 1)) as f64;
    let p_e = c as f64 / (nm * nm) as f64;
    if c == nm * nm {
        return if q == nm * m {
            Ok((1.0, p_bar, p_e))
        } else {
            Err(Error::DegenerateMarginals)
        };
    }
    let num = ((q - nm) * nm) as i128 - (c * (m - 1)) as i128;
    let den = ((nm * nm - c) * (m - 1)) as i128;
    Ok((num as f64 / den as f64, p_bar, p_e))
}

/// Fleiss' kappa over an items x categories matrix of rater counts, with a
/// percentile bootstrap CI over items.
pub fn fleiss_kappa(ratings: &[Vec<u64>], cfg: &BootstrapConfig) -> Result<AgreementResult> {
    check_cfg(cfg)?;
    if ratings.len() < 2 {
        return Err(Error::InsufficientItems {
            needed: 2,
            got: ratings.len(),
        });
    }
    let k = ratings[0].len();
    if let Some(r) = ratings.iter().find(|r| r.len() != k) {
        return Err(Error::LengthMismatch { left: k, right: r.len() });
    }
    let m: u64 = ratings[0].iter().sum();
    for (i, r) in ratings.iter().enumerate() {
        let s: u64 = r.iter().sum();
        if s != m {
            return Err(Error::RaggedRatings {
                item: i,
                expected: m,
                found: s,
            });
        }
    }
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 raters per item, found {m}")));
    }
    let n = ratings.len();
    let (value, p_o, p_e) = fleiss_exact(ratings, m, 0..n)?;
    let reps = bootstrap(n, cfg, |idx| fleiss_exact(ratings, m, idx.iter().copied()).map(|r| r.0))?;
    let (ci_low, ci_high) = percentile_ci(reps, cfg.level, value);
    Ok(AgreementResult {
        statistic: KappaStatistic::FleissKappa,
        value,
        p_o,
        p_e,
        ci_low,
        ci_high,
        n_items: n,
        n_raters: m as usize,
        bootstrap_b: cfg.b,
        seed: cfg.seed,
    })
}
