//! Test case corpora: the Juliet C/C++ 1.3 suite and synthetic overflow
//! programs.

mod juliet;
mod synthetic;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use juliet::{ingest_juliet, JulietCorpus, SkippedEntry};
pub use synthetic::{
    generate_synthetic, load_synthetic, NeighborKind, NeighborSlot, OverflowDirection, SyntheticManifest,
    SyntheticSpec, WriteKind, TEMPLATE_VERSION,
};

/// CWE categories whose Juliet cases exhibit sequential stack overflows.
pub const RELEVANT_CWES: [u32; 5] = [121, 122, 124, 194, 195];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseVariant {
    Bad,
    Good,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Juliet,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exclusion {
    Win32,
    SocketPair,
    GoodVariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub cwe: u32,
    pub variant: CaseVariant,
    pub flow_variant: u32,
    pub sources: Vec<PathBuf>,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion: Option<Exclusion>,
    /// The generating spec, for synthetic cases.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

impl TestCase {
    pub fn is_selected(&self) -> bool {
        self.exclusion.is_none()
    }
}

/// Keep cases without an exclusion tag, ordered by id.
pub fn select(cases: &[TestCase]) -> Vec<TestCase> {
    let mut selected: Vec<TestCase> = cases.iter().filter(|c| c.is_selected()).cloned().collect();
    selected.sort_by(|a, b| a.id.cmp(&b.id));
    selected
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CweCounts {
    pub total: u64,
    pub excluded: u64,
    pub selected: u64,
}

/// Per-CWE (total, excluded, selected) accounting. Only bad variants count as
/// test cases; the good variants of a case live in the same sources.
pub fn summarize(cases: &[TestCase]) -> BTreeMap<u32, CweCounts> {
    let mut counts: BTreeMap<u32, CweCounts> = BTreeMap::new();
    for case in cases.iter().filter(|c| c.variant == CaseVariant::Bad) {
        let entry = counts.entry(case.cwe).or_default();
        entry.total += 1;
        if case.is_selected() {
            entry.selected += 1;
        } else {
            entry.excluded += 1;
        }
    }
    counts
}
