//! Detection tables, reference data and findings.

mod emit;
mod findings;
mod reference;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::build_matrix::{ConfigKey, OptLevel};
use crate::classifier::OutcomeClass;
use crate::frame_model::{DetectionPrediction, PredictedClass, ProtectionVariant};
use crate::{Error, Result};

pub use emit::{emit, parse_json, Format};
pub use findings::{check_findings, Finding, FindingReport, FindingStatus};
pub use reference::{compare_to_reference, CellComparison, CorpusRow, ReferenceData, ReferenceDetection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Live,
    Predicted,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Predicted => "predicted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detector {
    Canary,
    ShadowStack,
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Detector::Canary => "canary",
            Detector::ShadowStack => "shadow-stack",
        })
    }
}

impl std::str::FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canary" => Ok(Detector::Canary),
            "shadow-stack" => Ok(Detector::ShadowStack),
            _ => Err(Error::InvalidConfig(format!("unknown detector {s:?}"))),
        }
    }
}

/// One classified execution (or prediction) of one case under one build
/// configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub case_id: String,
    pub cwe: u32,
    pub config: ConfigKey,
    pub class: OutcomeClass,
    pub mode: Mode,
    /// Whether the shadow stack was enforced during a live run.
    #[serde(default)]
    pub shadow_stack_enforced: bool,
}

impl DetectionRecord {
    /// Record a frame-model prediction. Predictions without a detection
    /// have no observable counterpart and are marked not run.
    pub fn predicted(case_id: &str, cwe: u32, config: ConfigKey, prediction: &DetectionPrediction) -> Self {
        let class = match prediction.predicted_class {
            PredictedClass::CanaryDetected => OutcomeClass::CanaryDetected,
            PredictedClass::ShadowStackDetected => OutcomeClass::ShadowStackDetected,
            PredictedClass::UndetectedCorruption => OutcomeClass::NotRun {
                reason: "predicted: undetected corruption".into(),
            },
            PredictedClass::NoCorruption => OutcomeClass::NotRun {
                reason: "predicted: no corruption".into(),
            },
        };
        DetectionRecord {
            case_id: case_id.to_string(),
            cwe,
            config,
            class,
            mode: Mode::Predicted,
            shadow_stack_enforced: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Column {
    pub compiler: String,
    pub opt_level: OptLevel,
    pub detector: Detector,
    pub mode: Mode,
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.compiler, self.opt_level, self.detector)?;
        if self.mode == Mode::Predicted {
            f.write_str(" (predicted)")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub variant: ProtectionVariant,
    pub column: Column,
    pub count: u64,
    pub total: u64,
    pub rate: f64,
}

impl TableCell {
    pub fn new(variant: ProtectionVariant, column: Column, count: u64, total: u64) -> Self {
        let rate = if total == 0 { 0.0 } else { count as f64 / total as f64 };
        TableCell {
            variant,
            column,
            count,
            total,
            rate,
        }
    }
}

/// Detection counts by variant row and (compiler, optimisation, detector,
/// mode) column. Cells absent from `cells` are missing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionTable {
    /// Compiler family to version.
    pub toolchains: BTreeMap<String, String>,
    /// Sorted by variant, then column.
    pub cells: Vec<TableCell>,
}

impl DetectionTable {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, variant: &ProtectionVariant, column: &Column) -> Option<&TableCell> {
        self.cells
            .iter()
            .find(|c| &c.variant == variant && &c.column == column)
    }

    /// Count for `variant` in the column, if the cell exists.
    pub fn count(
        &self,
        variant: &ProtectionVariant,
        compiler: &str,
        opt_level: OptLevel,
        detector: Detector,
        mode: Mode,
    ) -> Option<u64> {
        let column = Column {
            compiler: compiler.to_string(),
            opt_level,
            detector,
            mode,
        };
        self.cell(variant, &column).map(|c| c.count)
    }

    pub fn variants(&self) -> Vec<ProtectionVariant> {
        let mut v: Vec<_> = self.cells.iter().map(|c| c.variant).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn columns(&self) -> Vec<Column> {
        let mut c: Vec<_> = self.cells.iter().map(|c| c.column.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    fn sort(&mut self) {
        self.cells
            .sort_by(|a, b| (a.variant, &a.column).cmp(&(b.variant, &b.column)));
    }
}

/// Count detections per cell.
///
/// Every record contributes to the canary column of its configuration.
/// Records of shadow-stack variants also contribute to the shadow-stack
/// column when they are predictions or live runs with enforcement on; a live
/// run without enforcement says nothing about the shadow stack.
pub fn aggregate<'a, I>(records: I) -> Result<DetectionTable>
where
    I: IntoIterator<Item = &'a DetectionRecord>,
{
    let mut seen = HashSet::new();
    let mut toolchains: BTreeMap<String, String> = BTreeMap::new();
    let mut extra_flags: BTreeMap<(String, OptLevel, ProtectionVariant), Vec<String>> = BTreeMap::new();
    let mut counts: BTreeMap<(ProtectionVariant, Column), (u64, u64)> = BTreeMap::new();

    for record in records {
        let config = &record.config;
        let key = (
            record.case_id.clone(),
            config.compiler.clone(),
            config.opt_level,
            config.variant,
            record.mode,
        );
        if !seen.insert(key) {
            return Err(Error::AggregationConflict(format!(
                "{} under {} ({})",
                record.case_id, config, record.mode
            )));
        }
        match toolchains.get(&config.compiler) {
            Some(v) if v != &config.compiler_version => {
                return Err(Error::AggregationConflict(format!(
                    "{} appears with versions {v} and {}",
                    config.compiler, config.compiler_version
                )))
            }
            Some(_) => {}
            None => {
                toolchains.insert(config.compiler.clone(), config.compiler_version.clone());
            }
        }
        let flags_key = (config.compiler.clone(), config.opt_level, config.variant);
        match extra_flags.get(&flags_key) {
            Some(f) if f != &config.extra_flags => {
                return Err(Error::AggregationConflict(format!(
                    "{config} mixes extra flags {f:?} and {:?}",
                    config.extra_flags
                )))
            }
            Some(_) => {}
            None => {
                extra_flags.insert(flags_key, config.extra_flags.clone());
            }
        }

        let mut tally = |detector: Detector, hit: bool| {
            let column = Column {
                compiler: config.compiler.clone(),
                opt_level: config.opt_level,
                detector,
                mode: record.mode,
            };
            let entry = counts.entry((config.variant, column)).or_default();
            entry.1 += 1;
            if hit {
                entry.0 += 1;
            }
        };
        tally(Detector::Canary, record.class == OutcomeClass::CanaryDetected);
        if config.variant.shadow_stack && (record.mode == Mode::Predicted || record.shadow_stack_enforced) {
            tally(Detector::ShadowStack, record.class == OutcomeClass::ShadowStackDetected);
        }
    }

    let mut table = DetectionTable {
        toolchains,
        cells: counts
            .into_iter()
            .map(|((variant, column), (count, total))| TableCell::new(variant, column, count, total))
            .collect(),
    };
    table.sort();
    Ok(table)
}
