use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Column, DetectionTable, Detector, Mode, TableCell};
use crate::build_matrix::OptLevel;
use crate::frame_model::ProtectionVariant;
use crate::{Error, Result};

const BUNDLED: &str = include_str!("../../reference/juliet_reference.json");

/// Per-CWE corpus accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRow {
    pub cwe: u32,
    pub name: String,
    pub total: u64,
    pub excluded: u64,
    pub selected: u64,
    /// Cases detected by either detector in some configuration.
    pub detectable: u64,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceDetection {
    /// Short variant name, see [`ProtectionVariant`]'s `FromStr`.
    pub variant: String,
    pub compiler: String,
    pub opt_level: OptLevel,
    pub detector: Detector,
    pub count: u64,
    pub provenance: String,
}

/// Published Juliet results: corpus accounting and detection counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceData {
    pub toolchains: BTreeMap<String, String>,
    pub glibc: String,
    pub corpus: Vec<CorpusRow>,
    pub detections: Vec<ReferenceDetection>,
}

impl ReferenceData {
    /// The dataset shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled reference data is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let data: ReferenceData =
            serde_json::from_str(text).map_err(|e| Error::json("reference data", e))?;
        data.try_table()?;
        Ok(data)
    }

    /// Denominator of every detection rate: all selected cases.
    pub fn selected_total(&self) -> u64 {
        self.corpus.iter().map(|r| r.selected).sum()
    }

    pub fn corpus_row(&self, cwe: u32) -> Option<&CorpusRow> {
        self.corpus.iter().find(|r| r.cwe == cwe)
    }

    fn try_table(&self) -> Result<DetectionTable> {
        let total = self.selected_total();
        let mut cells = Vec::with_capacity(self.detections.len());
        for d in &self.detections {
            let variant: ProtectionVariant = d.variant.parse()?;
            if d.count > total {
                return Err(Error::InvalidConfig(format!(
                    "reference count {} exceeds {total} selected cases",
                    d.count
                )));
            }
            let column = Column {
                compiler: d.compiler.clone(),
                opt_level: d.opt_level,
                detector: d.detector,
                mode: Mode::Live,
            };
            cells.push(TableCell::new(variant, column, d.count, total));
        }
        let mut table = DetectionTable {
            toolchains: self.toolchains.clone(),
            cells,
        };
        table.sort();
        Ok(table)
    }

    /// The detection counts as a live-mode table over all selected cases.
    pub fn table(&self) -> DetectionTable {
        self.try_table().expect("validated at load")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComparison {
    pub variant: ProtectionVariant,
    pub column: Column,
    pub live: u64,
    pub reference: u64,
    pub within_tolerance: bool,
}

/// Compare live cells against the reference counts. A cell is within
/// tolerance when `|live - reference| <= tolerance * reference`.
pub fn compare_to_reference(
    live: &DetectionTable,
    reference: &ReferenceData,
    tolerance: f64,
) -> Vec<CellComparison> {
    let expected = reference.table();
    live.cells
        .iter()
        .filter(|c| c.column.mode == Mode::Live)
        .filter_map(|cell| {
            let r = expected.cell(&cell.variant, &cell.column)?;
            let diff = cell.count.abs_diff(r.count) as f64;
            Some(CellComparison {
                variant: cell.variant,
                column: cell.column.clone(),
                live: cell.count,
                reference: r.count,
                within_tolerance: diff <= tolerance * r.count as f64,
            })
        })
        .collect()
}
