//! C ABI over `temlm-core`.
//!
//! Every function returns a [`TemlmStatus`]. On failure the message is
//! available from [`temlm_last_error`] on the same thread. Handles are
//! opaque and must be released with their matching `_free` function.
//! Strings returned by the library are freed with [`temlm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use temlm_core::corpus::{load_corpus, Corpus};
use temlm_core::gate::{gate, verify_bundle, GatePolicy, GateReport};
use temlm_core::metrics::{cohen_kappa, fleiss_kappa, psi, psi_trace, AgreementResult, BootstrapConfig, DriftFeature};
use temlm_core::schema::{completeness, parse_doc, DocKind, Schema};
use temlm_core::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemlmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidInput = 5,
    Validation = 6,
    Computation = 7,
    Panic = 8,
}

/// Artifact document kinds.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemlmDocKind {
    Datasheet = 0,
    Card = 1,
}

/// Agreement statistic with its bootstrap interval.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TemlmAgreement {
    pub value: f64,
    pub p_o: f64,
    pub p_e: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// A loaded note corpus.
pub struct TemlmCorpus(Corpus);

/// Outcome of a release gate run.
pub struct TemlmGateReport(GateReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> TemlmStatus {
    match err {
        Error::Io { .. } => TemlmStatus::Io,
        Error::Syntax { .. } | Error::MalformedLine { .. } | Error::ValueKind { .. } => TemlmStatus::Parse,
        Error::DuplicateNoteId { .. }
        | Error::SpanOutOfBounds { .. }
        | Error::DuplicateIcdCode { .. }
        | Error::UnknownNoteId(_)
        | Error::PatientSplitViolation(_)
        | Error::Schema(_)
        | Error::Provenance(_)
        | Error::MissingBundleComponent(_)
        | Error::ReleaseCollision(_)
        | Error::Policy(_) => TemlmStatus::Validation,
        Error::DegenerateMarginals | Error::EmptyPeriod(_) | Error::FeatureUnavailable(_) => TemlmStatus::Computation,
        _ => TemlmStatus::InvalidInput,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), TemlmStatus>) -> TemlmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TemlmStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            TemlmStatus::Panic
        }
    }
}

fn fail(err: Error) -> TemlmStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn null(what: &str) -> TemlmStatus {
    set_error(format!("`{what}` is null"));
    TemlmStatus::NullPointer
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, TemlmStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map(PathBuf::from).map_err(|_| {
        set_error(format!("`{what}` is not valid UTF-8"));
        TemlmStatus::InvalidUtf8
    })
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], TemlmStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn out_string(s: String, out: *mut *mut c_char) -> Result<(), TemlmStatus> {
    let c = CString::new(s).map_err(|_| {
        set_error("output contains a nul byte");
        TemlmStatus::Computation
    })?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn agreement_out(r: &AgreementResult, out: *mut TemlmAgreement) {
    unsafe {
        *out = TemlmAgreement {
            value: r.value,
            p_o: r.p_o,
            p_e: r.p_e,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn temlm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or NULL.
/// The pointer is valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn temlm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn temlm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Population stability index between two histograms of equal length.
///
/// # Safety
/// `baseline` and `period` must point to `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn temlm_psi(baseline: *const f64, period: *const f64, n: usize, out: *mut f64) -> TemlmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let b = slice_arg(baseline, n, "baseline")?;
        let p = slice_arg(period, n, "period")?;
        let v = psi(b, p).map_err(fail)?;
        *out = v;
        Ok(())
    })
}

/// Cohen's kappa for two raters labelling `n` items.
///
/// # Safety
/// `labels_a` and `labels_b` must point to `n` readable values.
#[no_mangle]
pub unsafe extern "C" fn temlm_cohen_kappa(
    labels_a: *const u32,
    labels_b: *const u32,
    n: usize,
    bootstrap_b: usize,
    seed: u64,
    out: *mut TemlmAgreement,
) -> TemlmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = slice_arg(labels_a, n, "labels_a")?;
        let b = slice_arg(labels_b, n, "labels_b")?;
        let cfg = BootstrapConfig {
            b: bootstrap_b,
            seed,
            ..BootstrapConfig::default()
        };
        let r = cohen_kappa(a, b, &cfg).map_err(fail)?;
        agreement_out(&r, out);
        Ok(())
    })
}

/// Fleiss' kappa from a row-major `n_items` by `n_categories` count matrix.
///
/// # Safety
/// `counts` must point to `n_items * n_categories` readable values.
#[no_mangle]
pub unsafe extern "C" fn temlm_fleiss_kappa(
    counts: *const u64,
    n_items: usize,
    n_categories: usize,
    bootstrap_b: usize,
    seed: u64,
    out: *mut TemlmAgreement,
) -> TemlmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n_items.checked_mul(n_categories).ok_or_else(|| {
            set_error("matrix size overflows");
            TemlmStatus::InvalidInput
        })?;
        if n_categories == 0 {
            set_error("n_categories must be positive");
            return Err(TemlmStatus::InvalidInput);
        }
        let flat = slice_arg(counts, len, "counts")?;
        let rows: Vec<Vec<u64>> = flat.chunks(n_categories).map(<[u64]>::to_vec).collect();
        let cfg = BootstrapConfig {
            b: bootstrap_b,
            seed,
            ..BootstrapConfig::default()
        };
        let r = fleiss_kappa(&rows, &cfg).map_err(fail)?;
        agreement_out(&r, out);
        Ok(())
    })
}

/// Completeness of a datasheet or model card against the shipped schema.
/// Any of the output pointers may be NULL.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn temlm_completeness(
    path: *const c_char,
    kind: TemlmDocKind,
    out_c: *mut f64,
    out_populated: *mut usize,
    out_total: *mut usize,
) -> TemlmStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let schema = Schema::shipped(match kind {
            TemlmDocKind::Datasheet => DocKind::Datasheet,
            TemlmDocKind::Card => DocKind::Card,
        });
        let parsed = parse_doc(&path, &schema).map_err(fail)?;
        let r = completeness(&parsed.doc, &schema);
        if !out_c.is_null() {
            *out_c = r.c;
        }
        if !out_populated.is_null() {
            *out_populated = r.populated;
        }
        if !out_total.is_null() {
            *out_total = r.total;
        }
        Ok(())
    })
}

/// Loads a JSONL corpus.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn temlm_corpus_load(path: *const c_char, out: *mut *mut TemlmCorpus) -> TemlmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let corpus = load_corpus(&path).map_err(fail)?;
        *out = Box::into_raw(Box::new(TemlmCorpus(corpus)));
        Ok(())
    })
}

/// Number of notes in a corpus, or 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn temlm_corpus_len(corpus: *const TemlmCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// PSI trace of `feature` ("icd", "note_type" or "length") against the
/// `baseline` year over every later year, as `year psi` text.
///
/// # Safety
/// `corpus` must be a live handle, `feature` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn temlm_corpus_psi_trace(
    corpus: *const TemlmCorpus,
    feature: *const c_char,
    baseline: i32,
    out: *mut *mut c_char,
) -> TemlmStatus {
    guard(|| {
        let corpus = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let name = path_arg(feature, "feature")?;
        let feature: DriftFeature = name.to_string_lossy().parse().map_err(fail)?;
        let mut years: Vec<i32> = corpus
            .0
            .iter()
            .filter_map(|n| n.admission_year)
            .filter(|&y| y > baseline)
            .collect();
        years.sort_unstable();
        years.dedup();
        let trace = psi_trace(&corpus.0, feature, baseline, &years).map_err(fail)?;
        out_string(trace.to_dat().render(), out)
    })
}

/// Releases a corpus handle. NULL is ignored.
///
/// # Safety
/// `corpus` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn temlm_corpus_free(corpus: *mut TemlmCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Runs the release gate on a bundle directory. `policy_path` may be NULL
/// for the shipped policy.
///
/// # Safety
/// Strings must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn temlm_gate_run(
    bundle_path: *const c_char,
    policy_path: *const c_char,
    out: *mut *mut TemlmGateReport,
) -> TemlmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let bundle = path_arg(bundle_path, "bundle_path")?;
        let policy = if policy_path.is_null() {
            GatePolicy::default_policy()
        } else {
            GatePolicy::load(path_arg(policy_path, "policy_path")?).map_err(fail)?
        };
        let report = gate(&bundle, &policy).map_err(fail)?;
        *out = Box::into_raw(Box::new(TemlmGateReport(report)));
        Ok(())
    })
}

/// 1 when every blocking check passed, 0 otherwise or for NULL.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn temlm_gate_report_passed(report: *const TemlmGateReport) -> i32 {
    report.as_ref().is_some_and(|r| r.0.passed()) as i32
}

/// Number of checks in the report, or 0 for NULL.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn temlm_gate_report_check_count(report: *const TemlmGateReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.checks.len())
}

/// Report as JSON. Free the result with [`temlm_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn temlm_gate_report_json(report: *const TemlmGateReport, out: *mut *mut c_char) -> TemlmStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        out_string(report.0.to_json_pretty(), out)
    })
}

/// Releases a gate report. NULL is ignored.
///
/// # Safety
/// `report` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn temlm_gate_report_free(report: *mut TemlmGateReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Recomputes a bundle's metrics and hashes. Writes 1 to `out_consistent`
/// when nothing disagrees.
///
/// # Safety
/// `bundle_path` must be NUL-terminated and `out_consistent` writable.
#[no_mangle]
pub unsafe extern "C" fn temlm_verify_bundle(bundle_path: *const c_char, out_consistent: *mut i32) -> TemlmStatus {
    guard(|| {
        if out_consistent.is_null() {
            return Err(null("out_consistent"));
        }
        let bundle = path_arg(bundle_path, "bundle_path")?;
        *out_consistent = verify_bundle(&bundle).consistent as i32;
        Ok(())
    })
}
