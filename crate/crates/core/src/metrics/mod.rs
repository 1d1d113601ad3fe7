//! Corpus-level transparency metrics: missingness, inter-annotator
//! agreement, PSI drift and the residual PHI risk proxy.

mod agreement;
mod missingness;
mod phi;
mod psi;

pub use agreement::{
    cohen_kappa, fleiss_kappa, kappa_from_confusion, kappa_from_proportions, AgreementResult, Annotations,
    BootstrapConfig, KappaStatistic,
};
pub use missingness::{
    missingness, Applicability, FieldMissingness, MissingField, MissingKind, MissingnessProfile, StrataKey,
};
pub use phi::{phi_risk_scan, PatternSet, PhiRiskResult, SamplingPlan, MAX_RISK};
pub use psi::{
    length_histogram_dat, psi, psi_trace, DriftFeature, DriftPoint, Histogram, PsiTrace, LENGTH_BIN_WIDTH,
    LENGTH_BINS, PSI_EPSILON,
};
