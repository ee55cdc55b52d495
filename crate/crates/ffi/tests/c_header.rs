use std::path::{Path, PathBuf};
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// `target/<profile>`, two levels above the test binary.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_is_generated_and_declares_the_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/mra.h")).unwrap();
    for name in ["MraStatus", "MRA_STATUS_PANIC", "mra_model_from_json", "mra_recover", "mra_last_error", "mra_string_free"] {
        assert!(header.contains(name), "{name} missing from mra.h");
    }
}

#[test]
fn c_program_links_and_runs() {
    let lib = profile_dir().join("libmra_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let tmp = tempfile::TempDir::new().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}{}", String::from_utf8_lossy(&out.stderr));
    assert!(text.contains("N=45 M=35 K_max=10"), "{text}");
    assert!(text.contains("verdict=0"), "{text}");
    assert!(text.contains("converged=1"), "{text}");
    assert!(text.contains("bad=2 error=set"), "{text}");
}
