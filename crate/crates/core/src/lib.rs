//! Machine-checkable transparency artifacts for clinical NLP releases.
//!
//! The crate covers six areas:
//!
//! * [`corpus`]: line-delimited note corpora, split manifests and a seeded
//!   fixture generator.
//! * [`schema`]: datasheet / model card field schemas, document parsing and
//!   documentation completeness.
//! * [`provenance`]: PROV-style event graphs, minimal-field validation, hash
//!   verification, lineage and version diffs.
//! * [`metrics`]: missingness, inter-annotator agreement, PSI drift and the
//!   residual PHI risk proxy.
//! * [`leakage`]: patient overlap and similarity-based train/test leakage.
//! * [`gate`]: release bundle assembly, policy-driven gating and continuous
//!   verification.
//!
//! Plot-ready data files (`*.dat`) are written through [`dat`].

pub mod corpus;
pub mod dat;
pub mod digest;
pub mod error;
pub mod gate;
pub mod leakage;
pub mod metrics;
pub mod provenance;
pub mod schema;

pub use error::{Error, Result};
