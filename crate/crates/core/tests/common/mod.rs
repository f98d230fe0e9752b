#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};

use stacklab::build_matrix::Toolchain;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn scratch() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().expect("temp dir")).path()
}

/// The first stock C compiler found on the host.
pub fn toolchain() -> Option<Toolchain> {
    static FOUND: OnceLock<Option<Toolchain>> = OnceLock::new();
    FOUND
        .get_or_init(|| {
            ["gcc", "clang", "cc"]
                .into_iter()
                .find_map(|d| Toolchain::probe(d).ok())
        })
        .clone()
}

pub fn toolchain_named(driver: &str) -> Option<Toolchain> {
    Toolchain::probe(driver).ok()
}

/// Compile `tests/fixtures/programs/<name>.c` with `flags`.
pub fn compile(name: &str, flags: &[&str]) -> Option<PathBuf> {
    static LOCK: Mutex<()> = Mutex::new(());
    let tc = toolchain()?;
    let _guard = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let source = fixture_dir().join("programs").join(format!("{name}.c"));
    let tag: String = flags.concat().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    let out = scratch().join(format!("{name}-{tag}"));
    if out.exists() {
        return Some(out);
    }
    let status = Command::new(&tc.driver)
        .args(flags)
        .arg(&source)
        .arg("-o")
        .arg(&out)
        .status()
        .ok()?;
    assert!(status.success(), "fixture {name} failed to compile");
    Some(out)
}

/// Skip the calling test when no compiler is present.
#[macro_export]
macro_rules! require {
    ($e:expr) => {
        match $e {
            Some(v) => v,
            None => {
                eprintln!("skipped: no C compiler on this host");
                return;
            }
        }
    };
}
