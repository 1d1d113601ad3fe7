use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use temlm_core::corpus::{load_corpus, load_split, make_fixture, write_corpus, FixtureKnobs};
use temlm_core::dat::DatTable;
use temlm_core::gate::{
    assemble_bundle, gate, verify_bundle, write_fixture_bundle, AssembleInputs, Defect, FixtureBundleSpec, GatePolicy,
    MetricInputs, MetricSettings,
};
use temlm_core::leakage::{audit_splits, Disclosures, SimilarityConfig, SimilarityMethod, DEFAULT_THRESHOLDS};
use temlm_core::metrics::{psi_trace, Annotations, DriftFeature, PatternSet};
use temlm_core::provenance::{diff_versions, lineage, load_bundle, load_bundle_lenient, verify_hashes};
use temlm_core::schema::{
    completeness, completeness_drift, default_drift_groups, parse_doc, parse_doc_str, DocKind, Schema,
};
use temlm_core::{Error, Result};

#[derive(Parser)]
#[command(name = "temlm", version, about = "Check transparency artifacts for clinical NLP releases")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Gate policy file; defaults to the shipped policy.
    #[arg(long, global = true)]
    policy: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Directory for output files.
    #[arg(long, global = true, env = "TEMLM_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Dat,
}

#[derive(Subcommand)]
enum Command {
    /// Validate datasheets or model cards and report completeness.
    Validate {
        #[arg(required = true)]
        docs: Vec<PathBuf>,
    },
    /// Run the corpus metric suite.
    Metrics {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, requires = "card")]
        datasheet: Option<PathBuf>,
        #[arg(long, requires = "datasheet")]
        card: Option<PathBuf>,
    },
    /// Leakage curve and patient overlap.
    Leak {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::CharNgram)]
        method: Method,
        #[arg(long, default_value_t = 5)]
        ngram: usize,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// PSI trace over admission years, or documentation drift over versions.
    Drift {
        #[arg(long, conflicts_with = "docs")]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "icd")]
        feature: String,
        /// Baseline year; defaults to the earliest.
        #[arg(long)]
        baseline: Option<i32>,
        /// Document versions in order.
        #[arg(long, num_args = 1..)]
        docs: Vec<PathBuf>,
    },
    /// Provenance queries.
    Prov {
        #[command(subcommand)]
        op: ProvOp,
    },
    /// Generate a synthetic corpus and split, or a full release bundle.
    Fixture {
        #[arg(long, default_value_t = 100)]
        patients: usize,
        #[arg(long, default_value_t = 3)]
        notes_per_patient: usize,
        /// JSON file of fixture knobs.
        #[arg(long)]
        knobs: Option<PathBuf>,
        /// Write a sealed release bundle instead of a corpus.
        #[arg(long)]
        bundle: bool,
        #[arg(long, value_enum, requires = "bundle")]
        defect: Option<DefectArg>,
    },
    /// Assemble a release bundle with a checksum manifest.
    Assemble {
        #[arg(long)]
        datasheet: PathBuf,
        #[arg(long)]
        card: PathBuf,
        #[arg(long)]
        provenance: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        signature: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Evaluate a bundle against the gate policy.
    Gate { bundle: PathBuf },
    /// Recompute metrics and hashes and compare with what a bundle records.
    Verify { bundle: PathBuf },
}

#[derive(Subcommand)]
enum ProvOp {
    Lineage { dir: PathBuf, entity: String },
    Diff { dir: PathBuf, a: String, b: String },
    Verify {
        dir: PathBuf,
        /// Root that artifact paths are relative to.
        #[arg(long)]
        root: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Token,
    CharNgram,
    Minhash,
}

#[derive(Clone, Copy, ValueEnum)]
enum DefectArg {
    BlankMandatoryField,
    PatientOverlap,
    OverCeilingLeakage,
    MissingAgreement,
    MissingDriftPlan,
    TamperedChecksum,
    StaleProvenance,
}

impl From<DefectArg> for Defect {
    fn from(d: DefectArg) -> Self {
        match d {
            DefectArg::BlankMandatoryField => Defect::BlankMandatoryField,
            DefectArg::PatientOverlap => Defect::PatientOverlap,
            DefectArg::OverCeilingLeakage => Defect::OverCeilingLeakage,
            DefectArg::MissingAgreement => Defect::MissingAgreement,
            DefectArg::MissingDriftPlan => Defect::MissingDriftPlan,
            DefectArg::TamperedChecksum => Defect::TamperedChecksum,
            DefectArg::StaleProvenance => Defect::StaleProvenance,
        }
    }
}

/// Result of one command in every supported representation.
struct Output {
    name: &'static str,
    text: String,
    json: String,
    dat: Option<String>,
    /// Findings or a failed gate.
    failed: bool,
}

impl Output {
    fn new<T: Serialize>(name: &'static str, text: String, value: &T, dat: Option<DatTable>, failed: bool) -> Self {
        Output {
            name,
            text,
            json: serde_json::to_string_pretty(value).expect("output serializes") + "\n",
            dat: dat.map(|t| t.render()),
            failed,
        }
    }
}

fn emit(out: Output, g: &Global) -> Result<ExitCode> {
    let (body, ext) = match g.format {
        Format::Text => (out.text, "txt"),
        Format::Json => (out.json, "json"),
        Format::Dat => match out.dat {
            Some(d) => (d, "dat"),
            None => return Err(Error::InvalidArgument(format!("`{}` has no dat output", out.name))),
        },
    };
    print!("{body}");
    if let Some(dir) = &g.out {
        fs::create_dir_all(dir).map_err(|e| temlm_io(dir, e))?;
        let p = dir.join(format!("{}.{ext}", out.name));
        fs::write(&p, &body).map_err(|e| temlm_io(&p, e))?;
    }
    Ok(if out.failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn temlm_io(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| temlm_io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn doc_kind_of(path: &Path) -> Result<DocKind> {
    #[derive(serde::Deserialize)]
    struct Head {
        doc_kind: DocKind,
    }
    read_json::<Head>(path).map(|h| h.doc_kind)
}

fn out_dir(g: &Global) -> Result<&Path> {
    g.out
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("--out (or TEMLM_OUT_DIR) is required".into()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match cli.command {
        Command::Validate { docs } => {
            let mut reports = Vec::new();
            let mut text = String::new();
            let mut failed = false;
            let mut dat = None;
            for path in &docs {
                let kind = doc_kind_of(path)?;
                let schema = Schema::shipped(kind);
                let parsed = parse_doc(path, &schema)?;
                let r = completeness(&parsed.doc, &schema);
                failed |= !r.is_complete() || !parsed.warnings.is_empty();
                text.push_str(&format!("{}: {kind} v{} C={}\n", path.display(), r.doc_version, r.c_display));
                for m in &r.missing_mandatory {
                    text.push_str(&format!("  missing {m}\n"));
                }
                for w in &parsed.warnings {
                    text.push_str(&format!("  warning: {w}\n"));
                }
                dat.get_or_insert_with(|| r.to_section_dat());
                reports.push(serde_json::json!({ "path": path, "report": r, "warnings": parsed.warnings }));
            }
            emit(Output::new("completeness", text, &reports, dat, failed), g)
        }
        Command::Metrics {
            corpus,
            split,
            patterns,
            annotations,
            datasheet,
            card,
        } => {
            let corpus = load_corpus(&corpus)?;
            let split = load_split(&split, &corpus)?;
            let patterns = match patterns {
                Some(p) => PatternSet::load(p)?,
                None => PatternSet::default_set(),
            };
            let annotations = annotations.map(|p| read_json::<Annotations>(&p)).transpose()?;
            let doc = |p: Option<PathBuf>, s: Schema| p.map(|p| parse_doc(p, &s).map(|d| d.doc)).transpose();
            let inputs = MetricInputs {
                datasheet: doc(datasheet, Schema::datasheet())?,
                card: doc(card, Schema::card())?,
                corpus,
                split,
                patterns,
                annotations,
            };
            let settings = MetricSettings {
                seed: g.seed,
                ..MetricSettings::default()
            };
            let report = temlm_core::gate::compute_metrics(&inputs, &settings)?;
            if let Some(dir) = &g.out {
                fs::create_dir_all(dir).map_err(|e| temlm_io(dir, e))?;
                for (name, body) in report.dat_files(&inputs.corpus) {
                    let p = dir.join(name);
                    fs::write(&p, body).map_err(|e| temlm_io(&p, e))?;
                }
            }
            let mut text = format!("notes: {}\n", report.n_notes);
            for f in &report.missingness.per_field {
                text.push_str(&format!("missing {}: {:.4}\n", f.field, f.rate));
            }
            for a in &report.agreement {
                text.push_str(&format!(
                    "{:?}: {:.4} [{:.4}, {:.4}]\n",
                    a.statistic, a.value, a.ci_low, a.ci_high
                ));
            }
            text.push_str(&format!(
                "phi risk: mean {:.4}, high-risk {:.4}\n",
                report.phi.mean_proxy, report.phi.frac_high_risk
            ));
            let dat = report.missingness.to_dat();
            emit(Output::new("metrics", text, &report, Some(dat), false), g)
        }
        Command::Leak {
            corpus,
            split,
            method,
            ngram,
            thresholds,
        } => {
            let corpus = load_corpus(&corpus)?;
            let split = load_split(&split, &corpus)?;
            let method = match method {
                Method::Token => SimilarityMethod::TokenJaccard,
                Method::CharNgram => SimilarityMethod::CharNgramJaccard { n: ngram },
                Method::Minhash => SimilarityMethod::minhash_default(),
            };
            let cfg = SimilarityConfig::new(method, thresholds.unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec()))?;
            let record = audit_splits(&corpus, &split, &cfg, Disclosures::default())?;
            let mut text = format!(
                "method {} | n_test {} | overlapping patients {}\n",
                record.curve.method.label(),
                record.curve.n_test,
                record.overlap.patients.len()
            );
            for p in &record.curve.points {
                text.push_str(&format!("L({:.2}) = {:.4} ({} notes)\n", p.threshold, p.rate, p.count));
            }
            for f in &record.findings {
                text.push_str(&format!("  {f}\n"));
            }
            let failed = !record.findings.is_empty();
            let dat = record.curve.to_dat();
            emit(Output::new("leakage", text, &record, Some(dat), failed), g)
        }
        Command::Drift {
            corpus,
            feature,
            baseline,
            docs,
        } => {
            if let Some(corpus) = corpus {
                let corpus = load_corpus(&corpus)?;
                let feature: DriftFeature = feature.parse()?;
                let mut years: Vec<i32> = corpus.iter().filter_map(|n| n.admission_year).collect();
                years.sort_unstable();
                years.dedup();
                let base = baseline
                    .or(years.first().copied())
                    .ok_or_else(|| Error::FeatureUnavailable("admission_year".into()))?;
                let periods: Vec<i32> = years.into_iter().filter(|&y| y != base).collect();
                let trace = psi_trace(&corpus, feature, base, &periods)?;
                let text: String = trace.points.iter().map(|p| format!("{} {:.6}\n", p.period, p.psi)).collect();
                let dat = trace.to_dat();
                emit(Output::new("psi", text, &trace, Some(dat), false), g)
            } else if !docs.is_empty() {
                let kind = doc_kind_of(&docs[0])?;
                let schema = Schema::shipped(kind);
                let parsed = docs
                    .iter()
                    .map(|p| {
                        let text = fs::read_to_string(p).map_err(|e| temlm_io(p, e))?;
                        parse_doc_str(&text, &schema).map(|d| d.doc)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let trace = completeness_drift(&parsed, &schema, &default_drift_groups());
                let dat = trace.to_dat();
                let failed = !trace.regressions().is_empty();
                let mut text = dat.render();
                for v in trace.regressions() {
                    text.push_str(&format!("regression at {v}\n"));
                }
                emit(Output::new("doc_drift", text, &trace, Some(dat), failed), g)
            } else {
                Err(Error::InvalidArgument("drift needs --corpus or --docs".into()))
            }
        }
        Command::Prov { op } => match op {
            ProvOp::Lineage { dir, entity } => {
                let bundle = load_bundle(&dir)?;
                let l = lineage(&bundle, &entity)?;
                let chain: Vec<&str> = l.event_chain().iter().map(|e| e.as_str()).collect();
                let text = format!("{} <- {}\n", l.root, chain.join(" -> "));
                emit(Output::new("lineage", text, &l, None, false), g)
            }
            ProvOp::Diff { dir, a, b } => {
                let bundle = load_bundle(&dir)?;
                let d = diff_versions(&bundle, &a, &b)?;
                let mut text = String::new();
                for c in &d.field_changes {
                    text.push_str(&format!(
                        "{} {}: {} -> {}\n",
                        c.event_type, c.field, c.value_a, c.value_b
                    ));
                }
                for x in &d.activities_only_in_a {
                    text.push_str(&format!("only in {a}: {x}\n"));
                }
                for x in &d.activities_only_in_b {
                    text.push_str(&format!("only in {b}: {x}\n"));
                }
                if d.is_empty() {
                    text.push_str("no differences\n");
                }
                emit(Output::new("diff", text, &d, None, false), g)
            }
            ProvOp::Verify { dir, root } => {
                let (bundle, violations) = load_bundle_lenient(&dir)?;
                let root = root.unwrap_or_else(|| dir.parent().map(Path::to_path_buf).unwrap_or_default());
                let integrity = verify_hashes(&bundle, &root);
                let mut text = String::new();
                for v in &violations {
                    text.push_str(&format!("violation: {v}\n"));
                }
                for e in integrity.mismatches() {
                    text.push_str(&format!("mismatch: {} ({})\n", e.entity_id, e.path.as_deref().unwrap_or("-")));
                }
                let failed = !violations.is_empty() || !integrity.passed();
                if !failed {
                    text.push_str(&format!("ok: {} entities\n", bundle.entities.len()));
                }
                let value = serde_json::json!({ "violations": violations, "integrity": integrity });
                emit(Output::new("prov_verify", text, &value, None, failed), g)
            }
        },
        Command::Fixture {
            patients,
            notes_per_patient,
            knobs,
            bundle,
            defect,
        } => {
            let dir = out_dir(g)?;
            if bundle {
                let spec = FixtureBundleSpec {
                    n_patients: patients,
                    notes_per_patient,
                    seed: g.seed,
                    defect: defect.map(Defect::from),
                };
                write_fixture_bundle(dir, &spec)?;
                println!("bundle written to {}", dir.display());
                return Ok(ExitCode::SUCCESS);
            }
            let knobs: FixtureKnobs = match knobs {
                Some(p) => read_json(&p)?,
                None => FixtureKnobs::default(),
            };
            let (corpus, split) = make_fixture(patients, notes_per_patient, g.seed, &knobs)?;
            fs::create_dir_all(dir).map_err(|e| temlm_io(dir, e))?;
            write_corpus(&corpus, dir.join("corpus.jsonl"))?;
            let p = dir.join("split.json");
            fs::write(&p, split.to_json()).map_err(|e| temlm_io(&p, e))?;
            println!("{} notes, {} patients written to {}", corpus.len(), corpus.patient_ids().count(), dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Assemble {
            datasheet,
            card,
            provenance,
            metrics,
            signature,
            overwrite,
        } => {
            let dir = out_dir(g)?;
            let inputs = AssembleInputs {
                datasheet,
                card,
                provenance,
                metrics,
                signature,
            };
            let m = assemble_bundle(&inputs, dir, overwrite)?;
            print!("{}", m.render());
            Ok(ExitCode::SUCCESS)
        }
        Command::Gate { bundle } => {
            let policy = match &g.policy {
                Some(p) => GatePolicy::load(p)?,
                None => GatePolicy::default_policy(),
            };
            let report = gate(&bundle, &policy)?;
            let text = report.render_text();
            let failed = !report.passed();
            emit(Output::new("gate_report", text, &report, None, failed), g)
        }
        Command::Verify { bundle } => {
            let report = verify_bundle(&bundle);
            let text = report.render_text();
            let failed = !report.consistent;
            emit(Output::new("verification", text, &report, None, failed), g)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
