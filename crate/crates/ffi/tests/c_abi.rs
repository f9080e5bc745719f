// SPDX-License-Identifier: MIT OR Apache-2.0

//! Builds a C program against the generated header and the static
//! library, then runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

fn profile_dir() -> PathBuf {
    // target/<profile>/deps/<this test>
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_compiles_standalone_as_c_and_cpp() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    for (compiler, std) in [("cc", "-std=c99"), ("c++", "-std=c++17")] {
        let lang = if compiler == "cc" { "c" } else { "c++" };
        let out = Command::new(compiler)
            .args([std, "-Wall", "-Wextra", "-Werror", "-fsyntax-only", "-x", lang])
            .arg("-I")
            .arg(&include)
            .arg(include.join("tokentrail.h"))
            .output()
            .expect("a C compiler is available");
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn c_program_links_and_runs() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = profile_dir().join("libtokentrail_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let cc = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-O1"])
        .arg("-I")
        .arg(dir.join("include"))
        .arg(dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let run = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    let expected = [
        "ids 2 15496 995",
        "shape 3 3 16",
        "points 4",
        "short buffer 10 needs 16",
        "out of range 4 message",
        "session ok",
        &format!("version {}", env!("CARGO_PKG_VERSION")),
    ];
    assert_eq!(stdout.lines().collect::<Vec<_>>(), expected);
}
