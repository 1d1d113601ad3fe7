use std::env;
use std::path::{Path, PathBuf};
use std::process::Command;

fn staticlib() -> Option<PathBuf> {
    let deps = env::current_exe().ok()?.parent()?.to_path_buf();
    [deps.join("libtemlm_ffi.a"), deps.parent()?.join("libtemlm_ffi.a")]
        .into_iter()
        .find(|p| p.exists())
}

#[test]
fn c_program_compiles_links_and_runs() {
    let cc = env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let Some(lib) = staticlib() else {
        eprintln!("skipping: static library not built");
        return;
    };
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(root.join("include"))
        .arg(root.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.trim(), format!("{} 0.4158883", env!("CARGO_PKG_VERSION")));
}
