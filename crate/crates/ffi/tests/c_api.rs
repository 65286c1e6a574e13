//! Compiles `smoke.c` against the generated header and the shared library.

use std::path::{Path, PathBuf};
use std::process::Command;

/// The directory holding the cdylib: `deps/` beside this test binary under
/// `cargo test`, or the profile directory after `cargo build`.
fn library_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.ancestors()
        .skip(1)
        .take(2)
        .find(|d| d.join("libsoftworld_ffi.so").exists() || d.join("libsoftworld_ffi.dylib").exists())
        .unwrap_or_else(|| panic!("no shared library near {}", exe.display()))
        .to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = library_dir();
    let work = tempfile::tempdir().unwrap();
    let exe = work.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror"])
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/smoke.c"))
        .arg("-L")
        .arg(&lib)
        .arg(format!("-Wl,-rpath,{}", lib.display()))
        .args(["-lsoftworld_ffi", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler is installed");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.trim_end().ends_with("ok"), "{stdout}");
}
