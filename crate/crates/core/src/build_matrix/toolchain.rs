use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

static CLANG_VERSION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"clang version (\d+(?:\.\d+)*)").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompilerFamily {
    Gcc,
    Clang,
    Other,
}

impl fmt::Display for CompilerFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompilerFamily::Gcc => "GCC",
            CompilerFamily::Clang => "Clang",
            CompilerFamily::Other => "cc",
        })
    }
}

/// A C compiler driver and its identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Toolchain {
    pub driver: PathBuf,
    pub family: CompilerFamily,
    pub version: String,
}

fn capture(driver: &Path, arg: &str) -> Result<String> {
    let out = Command::new(driver)
        .arg(arg)
        .env("LC_ALL", "C")
        .output()
        .map_err(|e| Error::InvalidConfig(format!("cannot run {}: {e}", driver.display())))?;
    if !out.status.success() {
        return Err(Error::InvalidConfig(format!(
            "{} {arg} failed: {}",
            driver.display(),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

impl Toolchain {
    /// Identify the compiler behind `driver`.
    pub fn probe(driver: impl Into<PathBuf>) -> Result<Toolchain> {
        let driver = driver.into();
        let banner = capture(&driver, "--version")?;
        let (family, version) = if let Some(caps) = CLANG_VERSION.captures(&banner) {
            (CompilerFamily::Clang, caps[1].to_string())
        } else if banner.contains("Free Software Foundation") || banner.contains("gcc") {
            let version = capture(&driver, "-dumpfullversion")?.trim().to_string();
            (CompilerFamily::Gcc, version)
        } else {
            let first = banner.lines().next().unwrap_or("").trim().to_string();
            (CompilerFamily::Other, first)
        };
        Ok(Toolchain {
            driver,
            family,
            version,
        })
    }

    /// `GCC 13.3.1`, `Clang 18.1.8`.
    pub fn label(&self) -> String {
        format!("{} {}", self.family, self.version)
    }
}
