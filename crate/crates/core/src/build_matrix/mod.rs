//! Compiler invocation for every (case, toolchain, optimisation, variant)
//! cell of the grid.

mod builder;
mod flags;
mod toolchain;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::frame_model::ProtectionVariant;
use crate::{Error, Result};

pub use builder::Builder;
pub use flags::{translate_flags, variant_label};
pub use toolchain::{CompilerFamily, Toolchain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OptLevel {
    O0,
    O2,
}

impl OptLevel {
    pub fn flag(self) -> &'static str {
        match self {
            OptLevel::O0 => "-O0",
            OptLevel::O2 => "-O2",
        }
    }
}

impl fmt::Display for OptLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag())
    }
}

impl std::str::FromStr for OptLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim_start_matches('-') {
            "O0" => Ok(OptLevel::O0),
            "O2" => Ok(OptLevel::O2),
            _ => Err(Error::InvalidConfig(format!("unsupported optimisation level {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub toolchain: Toolchain,
    pub opt_level: OptLevel,
    pub variant: ProtectionVariant,
    #[serde(default)]
    pub extra_flags: Vec<String>,
}

impl BuildConfig {
    pub fn new(toolchain: Toolchain, opt_level: OptLevel, variant: ProtectionVariant) -> Self {
        BuildConfig {
            toolchain,
            opt_level,
            variant,
            extra_flags: Vec::new(),
        }
    }

    pub fn key(&self) -> ConfigKey {
        ConfigKey {
            compiler: self.toolchain.family.to_string(),
            compiler_version: self.toolchain.version.clone(),
            opt_level: self.opt_level,
            variant: self.variant,
            extra_flags: self.extra_flags.clone(),
        }
    }

    /// Compiler arguments contributed by the configuration itself.
    pub fn flags(&self) -> Vec<String> {
        let mut flags = translate_flags(&self.variant, self.opt_level);
        flags.extend(self.extra_flags.iter().cloned());
        flags
    }
}

/// The toolchain-independent identity of a build configuration, as carried
/// by run outcomes and detection records.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfigKey {
    pub compiler: String,
    pub compiler_version: String,
    pub opt_level: OptLevel,
    pub variant: ProtectionVariant,
    #[serde(default)]
    pub extra_flags: Vec<String>,
}

impl ConfigKey {
    /// A file-system friendly name, unique per key.
    pub fn slug(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config key serialises");
        let digest = Sha256::digest(&json);
        let readable: String = format!(
            "{}-{}-{}-{}",
            self.compiler, self.compiler_version, self.opt_level, self.variant
        )
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
        format!("{}-{:02x}{:02x}{:02x}{:02x}", readable.to_ascii_lowercase(), digest[0], digest[1], digest[2], digest[3])
    }
}

impl fmt::Display for ConfigKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.compiler, self.compiler_version, self.opt_level, self.variant
        )?;
        if !self.extra_flags.is_empty() {
            write!(f, " [{}]", self.extra_flags.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildLog {
    pub command: Vec<String>,
    pub diagnostics: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binary {
    pub case_id: String,
    pub config: BuildConfig,
    pub path: PathBuf,
    /// Hex SHA-256 of the linked executable.
    pub content_hash: String,
    pub build_log: BuildLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuildStatus {
    Built,
    Failed,
    Unsupported,
}

/// One line of the build manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildRecord {
    pub case_id: String,
    pub config: ConfigKey,
    pub status: BuildStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl BuildRecord {
    /// Summarise a build attempt. Errors other than build failures and
    /// unsupported variants are returned unchanged.
    pub fn from_result(case_id: &str, config: &BuildConfig, result: &Result<Binary>) -> Self {
        let (status, content_hash, binary, detail) = match result {
            Ok(bin) => (
                BuildStatus::Built,
                Some(bin.content_hash.clone()),
                Some(bin.path.clone()),
                String::new(),
            ),
            Err(Error::UnsupportedVariant { diagnostics, .. }) => {
                (BuildStatus::Unsupported, None, None, diagnostics.clone())
            }
            Err(Error::BuildFailed { log, .. }) => (BuildStatus::Failed, None, None, log.clone()),
            Err(other) => (BuildStatus::Failed, None, None, other.to_string()),
        };
        BuildRecord {
            case_id: case_id.to_string(),
            config: config.key(),
            status,
            content_hash,
            binary,
            detail,
        }
    }
}

/// Write records as JSON lines.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut out = std::io::BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(|e| Error::json(path.display().to_string(), e))?;
        out.write_all(b"\n")
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    out.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Read a JSON lines file written by [`write_jsonl`].
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| Error::json(format!("{} line {}", path.display(), i + 1), e))
        })
        .collect()
}
