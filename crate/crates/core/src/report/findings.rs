use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DetectionTable, Detector, Mode};
use crate::build_matrix::OptLevel;
use crate::frame_model::{Heuristic, ProtectionVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingStatus {
    Pass,
    Fail,
    NotEvaluable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub name: String,
    pub status: FindingStatus,
    pub detail: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match self.status {
            FindingStatus::Pass => "PASS",
            FindingStatus::Fail => "FAIL",
            FindingStatus::NotEvaluable => "N/A ",
        };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingReport {
    pub findings: Vec<Finding>,
    /// Irregularities worth reporting that are not failures.
    pub anomalies: Vec<String>,
}

impl FindingReport {
    pub fn has_failures(&self) -> bool {
        self.findings.iter().any(|f| f.status == FindingStatus::Fail)
    }

    pub fn passed(&self) -> usize {
        self.findings.iter().filter(|f| f.status == FindingStatus::Pass).count()
    }
}

fn at_least(name: String, lhs: (String, Option<u64>), rhs: (String, Option<u64>)) -> Finding {
    match (lhs.1, rhs.1) {
        (Some(a), Some(b)) => Finding {
            name,
            status: if a >= b { FindingStatus::Pass } else { FindingStatus::Fail },
            detail: format!("{} {a} >= {} {b}", lhs.0, rhs.0),
        },
        _ => Finding {
            name,
            status: FindingStatus::NotEvaluable,
            detail: format!("missing row {}", if lhs.1.is_none() { lhs.0 } else { rhs.0 }),
        },
    }
}

fn layout_rows() -> [ProtectionVariant; 4] {
    [
        ProtectionVariant::layout(Heuristic::Protector).with_ssp_buffer_size(4),
        ProtectionVariant::layout(Heuristic::Protector).with_ssp_buffer_size(8),
        ProtectionVariant::layout(Heuristic::All),
        ProtectionVariant::layout(Heuristic::Strong),
    ]
}

/// Check the orderings the published results exhibit.
///
/// Canary strength: per compiler, optimisation level, mode and shadow-stack
/// setting, `all >= strong >= protector` in canary detections. Layout
/// improvement: per compiler, optimisation level and mode, the best
/// layout-only row detects more with the shadow stack than the plain
/// shadow-stack row. Individual layout rows that do not, and layout rows
/// detecting less at `-O0` than at `-O2`, are listed as anomalies.
pub fn check_findings(table: &DetectionTable) -> FindingReport {
    let mut report = FindingReport::default();
    let groups: BTreeSet<(String, OptLevel, Mode)> = table
        .columns()
        .into_iter()
        .map(|c| (c.compiler, c.opt_level, c.mode))
        .collect();

    let mut ordering_evaluated = false;
    for (compiler, opt, mode) in &groups {
        for shstk in [false, true] {
            let count = |v: ProtectionVariant| {
                let v = v.with_shadow_stack(shstk);
                (v.to_string(), table.count(&v, compiler, *opt, Detector::Canary, *mode))
            };
            let all = count(ProtectionVariant::canary(Heuristic::All));
            let strong = count(ProtectionVariant::canary(Heuristic::Strong));
            let protectors: Vec<_> = [4, 8]
                .into_iter()
                .map(|n| count(ProtectionVariant::canary(Heuristic::Protector).with_ssp_buffer_size(n)))
                .filter(|p| p.1.is_some())
                .collect();
            if all.1.is_none() && strong.1.is_none() && protectors.is_empty() {
                continue;
            }
            ordering_evaluated = true;
            let prefix = format!("{compiler} {opt} {mode}{}", if shstk { " +shstk" } else { "" });
            report
                .findings
                .push(at_least(format!("{prefix}: all >= strong"), all, strong.clone()));
            if protectors.is_empty() {
                report.findings.push(Finding {
                    name: format!("{prefix}: strong >= protector"),
                    status: FindingStatus::NotEvaluable,
                    detail: "missing protector rows".into(),
                });
            }
            for p in protectors {
                let name = format!("{prefix}: strong >= {}", p.0);
                report.findings.push(at_least(name, strong.clone(), p));
            }
        }
    }
    if !ordering_evaluated {
        report.findings.push(Finding {
            name: "canary strength ordering".into(),
            status: FindingStatus::NotEvaluable,
            detail: "no canary rows".into(),
        });
    }

    let mut layout_evaluated = false;
    for (compiler, opt, mode) in &groups {
        let shadow = |v: &ProtectionVariant| table.count(v, compiler, *opt, Detector::ShadowStack, *mode);
        let plain_variant = ProtectionVariant::canary(Heuristic::None).with_shadow_stack(true);
        let plain = shadow(&plain_variant);
        let layouts: Vec<(ProtectionVariant, u64)> = layout_rows()
            .into_iter()
            .filter_map(|v| shadow(&v).map(|n| (v, n)))
            .collect();
        if plain.is_none() && layouts.is_empty() {
            continue;
        }
        layout_evaluated = true;
        let name = format!("{compiler} {opt} {mode}: layout rows improve on plain shadow stack");
        let best = layouts.iter().max_by_key(|(_, n)| *n);
        report.findings.push(match (plain, best) {
            (Some(p), Some((v, n))) => Finding {
                name,
                status: if *n > p { FindingStatus::Pass } else { FindingStatus::Fail },
                detail: format!("{v} {n} > {plain_variant} {p}"),
            },
            (None, _) => Finding {
                name,
                status: FindingStatus::NotEvaluable,
                detail: format!("missing row {plain_variant}"),
            },
            (_, None) => Finding {
                name,
                status: FindingStatus::NotEvaluable,
                detail: "missing layout rows".into(),
            },
        });
        if let Some(p) = plain {
            for (v, n) in &layouts {
                if *n <= p {
                    report.anomalies.push(format!(
                        "{compiler} {opt} {mode}: {v} detects {n}, not above {plain_variant} {p}"
                    ));
                }
            }
        }
        if *opt == OptLevel::O0 {
            for (v, n) in &layouts {
                let o2 = table.count(v, compiler, OptLevel::O2, Detector::ShadowStack, *mode);
                if let Some(m) = o2.filter(|m| n < m) {
                    report.anomalies.push(format!(
                        "{compiler} {mode}: {v} detects {n} at -O0, below {m} at -O2"
                    ));
                }
            }
        }
    }
    if !layout_evaluated {
        report.findings.push(Finding {
            name: "layout rows improve on plain shadow stack".into(),
            status: FindingStatus::NotEvaluable,
            detail: "no shadow-stack rows".into(),
        });
    }
    report
}
