use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::digest::{sha256_file, sha256_hex};
use crate::error::{Error, Result};

pub const DATASHEET_DIR: &str = "datasheet";
pub const MODEL_CARD_DIR: &str = "model_card";
pub const PROVENANCE_DIR: &str = "provenance";
pub const METRICS_DIR: &str = "metrics";
pub const RELEASE_DIR: &str = "release";
pub const BUNDLE_DIRS: [&str; 5] = [DATASHEET_DIR, MODEL_CARD_DIR, PROVENANCE_DIR, METRICS_DIR, RELEASE_DIR];

pub const DATASHEET_FILE: &str = "datasheet/datasheet.json";
pub const CARD_FILE: &str = "model_card/card.json";
pub const REPORT_FILE: &str = "metrics/report.json";
pub const CORPUS_FILE: &str = "metrics/inputs/corpus.jsonl";
pub const SPLIT_FILE: &str = "metrics/inputs/split.json";
pub const PATTERNS_FILE: &str = "metrics/inputs/phi_patterns.json";
pub const ANNOTATIONS_FILE: &str = "metrics/inputs/annotations.json";
pub const PREPROCESS_FILE: &str = "metrics/inputs/preprocess.json";
pub const CHECKSUMS_FILE: &str = "release/checksums";
pub const SIGNATURE_FILE: &str = "release/checksums.sig";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub hash: String,
    /// Path relative to the bundle root, `/`-separated.
    pub path: String,
}

/// `sha256sum`-style manifest: one `<hash>  <path>` line per file, sorted
/// by path.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReleaseManifest {
    pub entries: Vec<ManifestEntry>,
}

impl ReleaseManifest {
    pub fn render(&self) -> String {
        self.entries.iter().map(|e| format!("{}  {}\n", e.hash, e.path)).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (hash, path) = line.split_once("  ").ok_or_else(|| Error::MalformedLine {
                line: i + 1,
                message: "expected `<sha256>  <path>`".into(),
            })?;
            if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(Error::MalformedLine {
                    line: i + 1,
                    message: format!("`{hash}` is not a SHA-256 digest"),
                });
            }
            entries.push(ManifestEntry {
                hash: hash.to_ascii_lowercase(),
                path: path.to_string(),
            });
        }
        Ok(ReleaseManifest { entries })
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.path == path).map(|e| e.hash.as_str())
    }

    /// Hashes every file under the five content directories of `root`,
    /// excluding `release/`.
    pub fn compute(root: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for dir in &BUNDLE_DIRS[..4] {
            for rel in list_files(root, dir)? {
                let p = root.join(&rel);
                entries.push(ManifestEntry {
                    hash: sha256_file(&p).map_err(|e| Error::io(&p, e))?,
                    path: rel,
                });
            }
        }
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(ReleaseManifest { entries })
    }
}

/// Relative paths of all regular files below `root/dir`, sorted.
pub(crate) fn list_files(root: &Path, dir: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::from(dir)];
    while let Some(rel) = stack.pop() {
        let abs = root.join(&rel);
        let rd = match fs::read_dir(&abs) {
            Ok(rd) => rd,
            Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
            Err(e) => return Err(Error::io(&abs, e)),
        };
        for entry in rd {
            let entry = entry.map_err(|e| Error::io(&abs, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let ty = entry.file_type().map_err(|e| Error::io(entry.path(), e))?;
            if ty.is_dir() {
                stack.push(rel.join(&name));
            } else if ty.is_file() {
                out.push(format!("{}/{name}", rel.to_string_lossy().replace('\\', "/")));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Errors naming the first missing layout directory.
pub fn check_layout(root: &Path) -> Result<()> {
    for dir in BUNDLE_DIRS {
        if !root.join(dir).is_dir() {
            return Err(Error::MissingBundleComponent(dir.to_string()));
        }
    }
    Ok(())
}

/// Writes `release/checksums` for the current contents of `root`.
pub fn seal_bundle(root: &Path) -> Result<ReleaseManifest> {
    let manifest = ReleaseManifest::compute(root)?;
    let release = root.join(RELEASE_DIR);
    fs::create_dir_all(&release).map_err(|e| Error::io(&release, e))?;
    let path = root.join(CHECKSUMS_FILE);
    fs::write(&path, manifest.render()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Source paths for [`assemble_bundle`].
#[derive(Debug, Clone)]
pub struct AssembleInputs {
    pub datasheet: PathBuf,
    pub card: PathBuf,
    /// Directory holding the provenance JSON files.
    pub provenance: PathBuf,
    /// Directory holding the metrics report, plot data and `inputs/`.
    pub metrics: PathBuf,
    /// Detached signature over the checksum manifest, produced externally.
    pub signature: Option<PathBuf>,
}

fn plan(inputs: &AssembleInputs) -> Result<Vec<(PathBuf, String)>> {
    let mut plan = vec![
        (inputs.datasheet.clone(), DATASHEET_FILE.to_string()),
        (inputs.card.clone(), CARD_FILE.to_string()),
    ];
    for (src, dir) in [(&inputs.provenance, PROVENANCE_DIR), (&inputs.metrics, METRICS_DIR)] {
        if !src.is_dir() {
            return Err(Error::MissingBundleComponent(dir.to_string()));
        }
        for rel in list_files(src, ".")? {
            let rel = rel.trim_start_matches("./").to_string();
            plan.push((src.join(&rel), format!("{dir}/{rel}")));
        }
    }
    for (src, _) in &plan {
        if !src.is_file() {
            return Err(Error::io(src, io::Error::new(io::ErrorKind::NotFound, "input file not found")));
        }
    }
    plan.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(plan)
}

/// Copies inputs into the release layout under `out` and writes the
/// checksum manifest. Re-running on unchanged inputs leaves the output
/// byte-identical; a different existing release is an error unless
/// `overwrite` is set.
pub fn assemble_bundle(inputs: &AssembleInputs, out: &Path, overwrite: bool) -> Result<ReleaseManifest> {
    let plan = plan(inputs)?;
    let mut entries = Vec::with_capacity(plan.len());
    for (src, rel) in &plan {
        entries.push(ManifestEntry {
            hash: sha256_file(src).map_err(|e| Error::io(src, e))?,
            path: rel.clone(),
        });
    }
    let manifest = ReleaseManifest { entries };
    let sig = match &inputs.signature {
        Some(p) => Some(fs::read(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };

    let existing = out.join(CHECKSUMS_FILE);
    if existing.exists() {
        let same = fs::read_to_string(&existing).is_ok_and(|t| t == manifest.render())
            && ReleaseManifest::compute(out).is_ok_and(|m| m == manifest)
            && fs::read(out.join(SIGNATURE_FILE)).ok() == sig;
        if same {
            return Ok(manifest);
        }
        if !overwrite {
            return Err(Error::ReleaseCollision(out.to_path_buf()));
        }
    }
    for dir in BUNDLE_DIRS {
        let d = out.join(dir);
        if d.exists() {
            fs::remove_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for (src, rel) in &plan {
        let dst = out.join(rel);
        if let Some(parent) = dst.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::copy(src, &dst).map_err(|e| Error::io(&dst, e))?;
    }
    let path = out.join(CHECKSUMS_FILE);
    fs::write(&path, manifest.render()).map_err(|e| Error::io(&path, e))?;
    if let Some(bytes) = sig {
        let p = out.join(SIGNATURE_FILE);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ChecksumIssue {
    Missing,
    Unparseable { message: String },
    Mismatch { path: String, recorded: String, computed: String },
    Unlisted { path: String },
    Vanished { path: String },
    SignatureMissing,
    SignatureEmpty,
}

/// Compares `release/checksums` with the files on disk.
pub fn check_release(root: &Path, require_signature: bool) -> Result<(Option<ReleaseManifest>, Vec<ChecksumIssue>)> {
    let mut issues = Vec::new();
    let path = root.join(CHECKSUMS_FILE);
    let recorded = match fs::read_to_string(&path) {
        Ok(t) => match ReleaseManifest::parse(&t) {
            Ok(m) => Some(m),
            Err(e) => {
                issues.push(ChecksumIssue::Unparseable { message: e.to_string() });
                None
            }
        },
        Err(_) => {
            issues.push(ChecksumIssue::Missing);
            None
        }
    };
    let actual = ReleaseManifest::compute(root)?;
    if let Some(rec) = &recorded {
        for e in &rec.entries {
            match actual.get(&e.path) {
                Some(h) if h == e.hash => {}
                Some(h) => issues.push(ChecksumIssue::Mismatch {
                    path: e.path.clone(),
                    recorded: e.hash.clone(),
                    computed: h.to_string(),
                }),
                None => issues.push(ChecksumIssue::Vanished { path: e.path.clone() }),
            }
        }
        for e in &actual.entries {
            if rec.get(&e.path).is_none() {
                issues.push(ChecksumIssue::Unlisted { path: e.path.clone() });
            }
        }
    }
    match fs::read(root.join(SIGNATURE_FILE)) {
        Ok(b) if b.is_empty() => issues.push(ChecksumIssue::SignatureEmpty),
        Ok(_) => {}
        Err(_) if require_signature => issues.push(ChecksumIssue::SignatureMissing),
        Err(_) => {}
    }
    Ok((recorded, issues))
}

/// SHA-256 of a bundle file, or `None` if it cannot be read.
pub(crate) fn file_hash(root: &Path, rel: &str) -> Option<String> {
    fs::read(root.join(rel)).ok().map(|b| sha256_hex(&b))
}
