use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SplitManifest};
use crate::error::{Error, Result};
use crate::leakage::{audit_splits, Disclosures, LeakageAuditRecord, SimilarityConfig};
use crate::metrics::{
    length_histogram_dat, missingness, phi_risk_scan, psi_trace, AgreementResult, Annotations, Applicability,
    BootstrapConfig, DriftFeature, MissingField, MissingnessProfile, PatternSet, PhiRiskResult, PsiTrace, StrataKey,
};
use crate::schema::{completeness, ArtifactDoc, CompletenessReport, Schema};

/// Everything needed to reproduce a metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSettings {
    pub seed: u64,
    pub bootstrap: BootstrapConfig,
    pub similarity: SimilarityConfig,
    pub missingness_fields: Vec<MissingField>,
    pub strata_by: Option<StrataKey>,
    #[serde(default)]
    pub applicability: Applicability,
    pub phi_threshold: u8,
    pub phi_sample_size: usize,
    pub drift_feature: DriftFeature,
    /// Baseline year; `None` uses the earliest admission year.
    pub drift_baseline: Option<i32>,
    #[serde(default)]
    pub disclosures: Disclosures,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            seed: 0,
            bootstrap: BootstrapConfig::default(),
            similarity: SimilarityConfig::default(),
            missingness_fields: MissingField::ALL.to_vec(),
            strata_by: Some(StrataKey::NoteType),
            applicability: Applicability::default(),
            phi_threshold: 3,
            phi_sample_size: 50,
            drift_feature: DriftFeature::Icd,
            drift_baseline: None,
            disclosures: Disclosures::default(),
        }
    }
}

/// In-memory inputs to [`compute_metrics`].
#[derive(Debug, Clone)]
pub struct MetricInputs {
    pub corpus: Corpus,
    pub split: SplitManifest,
    pub patterns: PatternSet,
    pub annotations: Option<Annotations>,
    /// Documents are optional; without both, completeness is omitted.
    pub datasheet: Option<ArtifactDoc>,
    pub card: Option<ArtifactDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocCompleteness {
    pub datasheet: CompletenessReport,
    pub card: CompletenessReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub settings: MetricSettings,
    pub n_notes: usize,
    pub completeness: Option<DocCompleteness>,
    pub missingness: MissingnessProfile,
    pub leakage: LeakageAuditRecord,
    pub agreement: Vec<AgreementResult>,
    pub drift: Option<PsiTrace>,
    pub phi: PhiRiskResult,
}

impl MetricsReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Plot data files keyed by file name.
    pub fn dat_files(&self, corpus: &Corpus) -> BTreeMap<&'static str, String> {
        let mut out = BTreeMap::new();
        if let Some(c) = &self.completeness {
            out.insert("completeness.dat", c.datasheet.to_section_dat().render());
        }
        out.insert("leakage.dat", self.leakage.curve.to_dat().render());
        out.insert("phi_risk.dat", self.phi.to_dat().render());
        out.insert("missingness.dat", self.missingness.to_dat().render());
        out.insert("lengths.dat", length_histogram_dat(corpus).render());
        if let Some(d) = &self.drift {
            out.insert("psi.dat", d.to_dat().render());
        }
        out
    }
}

/// Runs the full metric suite. Drift is skipped when fewer than two
/// admission years are present.
pub fn compute_metrics(inputs: &MetricInputs, settings: &MetricSettings) -> Result<MetricsReport> {
    let corpus = &inputs.corpus;
    let completeness = match (&inputs.datasheet, &inputs.card) {
        (Some(ds), Some(card)) => Some(DocCompleteness {
            datasheet: completeness(ds, &Schema::datasheet()),
            card: completeness(card, &Schema::card()),
        }),
        _ => None,
    };
    let miss = missingness(corpus, &settings.missingness_fields, settings.strata_by, &settings.applicability);
    let leakage = audit_splits(corpus, &inputs.split, &settings.similarity, settings.disclosures.clone())?;
    let bootstrap = BootstrapConfig {
        seed: settings.seed,
        ..settings.bootstrap
    };
    let agreement = inputs
        .annotations
        .iter()
        .map(|a| a.agreement(&bootstrap))
        .collect::<Result<Vec<_>>>()?;
    let mut years: Vec<i32> = corpus.iter().filter_map(|n| n.admission_year).collect();
    years.sort_unstable();
    years.dedup();
    let drift = match (settings.drift_baseline.or(years.first().copied()), years.len()) {
        (Some(base), n) if n >= 2 => {
            let periods: Vec<i32> = years.iter().copied().filter(|&y| y != base).collect();
            Some(psi_trace(corpus, settings.drift_feature, base, &periods)?)
        }
        _ => None,
    };
    let sample = settings.phi_sample_size.min(corpus.len());
    let phi = phi_risk_scan(corpus, &inputs.patterns, settings.phi_threshold, sample, settings.seed)?;
    Ok(MetricsReport {
        settings: settings.clone(),
        n_notes: corpus.len(),
        completeness,
        missingness: miss,
        leakage,
        agreement,
        drift,
        phi,
    })
}
