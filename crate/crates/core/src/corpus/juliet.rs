use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use log::warn;
use regex::Regex;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::{CaseVariant, Exclusion, Origin, TestCase, RELEVANT_CWES};
use crate::{Error, Result};

// CWE121_Stack_Based_Buffer_Overflow__CWE131_loop_51a.c
// CWE121_Stack_Based_Buffer_Overflow__CWE805_char_alloca_loop_81_goodG2B.cpp
static CASE_FILE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(?P<base>CWE(?P<cwe>\d+)_[A-Za-z0-9_]+?__[A-Za-z0-9_]+?_(?P<flow>\d{2}))(?:[a-z]|_bad|_good[A-Za-z0-9]*)?\.(?:c|cpp)$",
    )
    .unwrap()
});

static CWE_DIR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^CWE(\d+)_").unwrap());

static WINDOWS_INCLUDE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)^#\s*include\s*[<"]windows\.h[>"]"#).unwrap());

/// A testcase file or directory that could not be turned into a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedEntry {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct JulietCorpus {
    /// A bad and a good case per Juliet test case, sorted by id.
    pub cases: Vec<TestCase>,
    pub skipped: Vec<SkippedEntry>,
    /// The `testcasesupport` directory next to `testcases`, when present.
    pub support_dir: Option<PathBuf>,
}

#[derive(Default)]
struct Group {
    cwe: u32,
    flow: u32,
    sources: Vec<PathBuf>,
}

fn testcases_dir(root: &Path) -> Result<PathBuf> {
    let meta = fs::metadata(root).map_err(|e| Error::CorpusNotFound {
        path: root.to_path_buf(),
        reason: e.to_string(),
    })?;
    if !meta.is_dir() {
        return Err(Error::CorpusNotFound {
            path: root.to_path_buf(),
            reason: "not a directory".into(),
        });
    }
    for candidate in [root.join("testcases"), root.join("C").join("testcases")] {
        if candidate.is_dir() {
            return Ok(candidate);
        }
    }
    Ok(root.to_path_buf())
}

/// Read a Juliet 1.3 C/C++ tree and tag every case of the relevant CWE
/// categories with its exclusion reason, if any.
///
/// `root` may be the suite's `C` directory, its parent, or a directory that
/// directly holds the per-CWE directories.
pub fn ingest_juliet(root: &Path) -> Result<JulietCorpus> {
    let testcases = testcases_dir(root)?;
    let entries = fs::read_dir(&testcases).map_err(|e| Error::CorpusNotFound {
        path: testcases.clone(),
        reason: e.to_string(),
    })?;

    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    let mut skipped = Vec::new();

    let mut cwe_dirs: Vec<(u32, PathBuf)> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            let cwe: u32 = CWE_DIR.captures(&name)?[1].parse().ok()?;
            RELEVANT_CWES.contains(&cwe).then(|| (cwe, e.path()))
        })
        .collect();
    cwe_dirs.sort();

    for (dir_cwe, dir) in cwe_dirs {
        for entry in WalkDir::new(&dir).sort_by_file_name() {
            let entry = match entry {
                Ok(entry) => entry,
                Err(e) => {
                    warn!("skipping unreadable entry under {}: {e}", dir.display());
                    skipped.push(SkippedEntry {
                        path: e.path().map(Path::to_path_buf).unwrap_or_else(|| dir.clone()),
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            if !entry.file_type().is_file() {
                continue;
            }
            let name = entry.file_name().to_string_lossy();
            let is_source = name.ends_with(".c") || name.ends_with(".cpp");
            if !is_source || !name.starts_with("CWE") {
                // headers, main.cpp, Makefiles and friends
                continue;
            }
            let Some(caps) = CASE_FILE.captures(&name) else {
                warn!("unrecognised testcase file name {}", entry.path().display());
                skipped.push(SkippedEntry {
                    path: entry.path().to_path_buf(),
                    reason: "file name does not follow the Juliet convention".into(),
                });
                continue;
            };
            let cwe: u32 = caps["cwe"].parse().unwrap_or(0);
            if cwe != dir_cwe {
                skipped.push(SkippedEntry {
                    path: entry.path().to_path_buf(),
                    reason: format!("CWE{cwe} file inside the CWE{dir_cwe} directory"),
                });
                continue;
            }
            let group = groups.entry(caps["base"].to_string()).or_default();
            group.cwe = cwe;
            group.flow = caps["flow"].parse().unwrap_or(0);
            group.sources.push(entry.path().to_path_buf());
        }
    }

    let mut cases = Vec::with_capacity(groups.len() * 2);
    for (base, group) in groups {
        let exclusion = match classify_exclusion(&base, &group.sources) {
            Ok(exclusion) => exclusion,
            Err(reason) => {
                warn!("skipping {base}: {reason}");
                skipped.push(SkippedEntry {
                    path: group.sources.first().cloned().unwrap_or_default(),
                    reason,
                });
                continue;
            }
        };
        cases.push(TestCase {
            id: base.clone(),
            cwe: group.cwe,
            variant: CaseVariant::Bad,
            flow_variant: group.flow,
            sources: group.sources.clone(),
            origin: Origin::Juliet,
            exclusion,
            synthetic: None,
        });
        cases.push(TestCase {
            id: format!("{base}_good"),
            cwe: group.cwe,
            variant: CaseVariant::Good,
            flow_variant: group.flow,
            sources: group.sources,
            origin: Origin::Juliet,
            exclusion: Some(Exclusion::GoodVariant),
            synthetic: None,
        });
    }
    cases.sort_by(|a, b| a.id.cmp(&b.id));

    let support_dir = testcases
        .parent()
        .map(|p| p.join("testcasesupport"))
        .filter(|p| p.is_dir());

    Ok(JulietCorpus {
        cases,
        skipped,
        support_dir,
    })
}

fn classify_exclusion(base: &str, sources: &[PathBuf]) -> std::result::Result<Option<Exclusion>, String> {
    if base.contains("_listen_socket") || base.contains("_connect_socket") {
        return Ok(Some(Exclusion::SocketPair));
    }
    if base.to_ascii_lowercase().contains("w32") {
        return Ok(Some(Exclusion::Win32));
    }
    for source in sources {
        let bytes = fs::read(source).map_err(|e| format!("{}: {e}", source.display()))?;
        if includes_windows_h(&String::from_utf8_lossy(&bytes)) {
            return Ok(Some(Exclusion::Win32));
        }
    }
    Ok(None)
}

fn mentions_windows(condition: &str) -> bool {
    ["_WIN32", "_WIN64", "_MSC_VER", "WIN32"]
        .iter()
        .any(|m| condition.contains(m))
}

/// True if `windows.h` is included outside of any Windows-only conditional.
/// Juliet's portable sources include it under `#ifdef _WIN32`, which must not
/// count.
pub(crate) fn includes_windows_h(source: &str) -> bool {
    // (is this a windows-conditional block, is the current branch windows-only)
    let mut stack: Vec<(bool, bool)> = Vec::new();
    for line in source.lines() {
        let line = line.trim_start();
        let Some(directive) = line.strip_prefix('#') else {
            continue;
        };
        let directive = directive.trim_start();
        let word = directive.split_whitespace().next().unwrap_or("");
        match word {
            "ifdef" | "if" => {
                let win = mentions_windows(directive) && !directive.contains('!');
                stack.push((mentions_windows(directive), win));
            }
            "ifndef" => {
                stack.push((mentions_windows(directive), false));
            }
            "else" => {
                if let Some((conditional, branch)) = stack.last_mut() {
                    if *conditional {
                        *branch = !*branch;
                    }
                }
            }
            "elif" => {
                if let Some((_, branch)) = stack.last_mut() {
                    *branch = false;
                }
            }
            "endif" => {
                stack.pop();
            }
            "include" => {
                let guarded = stack.iter().any(|&(_, win)| win);
                if !guarded && WINDOWS_INCLUDE.is_match(line) {
                    return true;
                }
            }
            _ => {}
        }
    }
    false
}
