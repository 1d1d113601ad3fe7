//! Release bundles: assembly, policy-driven gating and continuous
//! verification.
//!
//! A bundle directory has five parts: `datasheet/`, `model_card/`,
//! `provenance/`, `metrics/` (report, plot data and the `inputs/` used to
//! compute them) and `release/` (checksum manifest and optional detached
//! signature).

mod bundle;
mod check;
mod fixture;
mod policy;
mod suite;
mod verify;

pub use bundle::{
    assemble_bundle, check_layout, check_release, seal_bundle, AssembleInputs, ChecksumIssue, ManifestEntry,
    ReleaseManifest, ANNOTATIONS_FILE, BUNDLE_DIRS, CARD_FILE, CHECKSUMS_FILE, CORPUS_FILE, DATASHEET_DIR,
    DATASHEET_FILE, METRICS_DIR, MODEL_CARD_DIR, PATTERNS_FILE, PREPROCESS_FILE, PROVENANCE_DIR, RELEASE_DIR,
    REPORT_FILE, SIGNATURE_FILE, SPLIT_FILE,
};
pub use check::{gate, CheckResult, CheckStatus, GateReport, Verdict};
pub use fixture::{blanked_field, write_fixture_bundle, Defect, FixtureBundleSpec};
pub use policy::{Ceiling, CheckSpec, GateCheck, GatePolicy, Severity, DEFAULT_POLICY_JSON};
pub use suite::{compute_metrics, DocCompleteness, MetricInputs, MetricSettings, MetricsReport};
pub use verify::{verify_bundle, Finding, FindingKind, VerificationReport, FLOAT_RTOL};
