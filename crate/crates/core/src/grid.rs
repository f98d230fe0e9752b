//! The full pipeline over a case × configuration grid: build, run,
//! classify, and fall back to frame-model predictions where a live
//! observation is impossible.

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::build_matrix::{BuildConfig, BuildRecord, Builder, OptLevel};
use crate::classifier::{classify, OutcomeClass};
use crate::corpus::TestCase;
use crate::report::{DetectionRecord, Mode};
use crate::runner::{run, RunEnvironment, RunOutcome, ShadowStackCapability};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub cases: Vec<TestCase>,
    pub configs: Vec<BuildConfig>,
    pub env: RunEnvironment,
    pub capability: ShadowStackCapability,
    /// Worker threads; 0 picks the number of CPUs.
    pub jobs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub builds: Vec<BuildRecord>,
    pub outcomes: Vec<RunOutcome>,
    pub records: Vec<DetectionRecord>,
}

#[derive(Default)]
struct CellResult {
    build: Option<BuildRecord>,
    outcome: Option<RunOutcome>,
    records: Vec<DetectionRecord>,
}

/// Frame-model record for a synthetic case, if it has a generating spec.
pub fn predict_record(case: &TestCase, config: &BuildConfig) -> Result<Option<DetectionRecord>> {
    let Some(spec) = &case.synthetic else {
        return Ok(None);
    };
    let mut variant = config.variant;
    if config.opt_level == OptLevel::O2 {
        variant.omit_frame_pointer = true;
    }
    let (_, prediction) = spec.predict(&variant)?;
    Ok(Some(DetectionRecord::predicted(&case.id, case.cwe, config.key(), &prediction)))
}

fn not_run(case: &TestCase, config: &BuildConfig, reason: String) -> DetectionRecord {
    DetectionRecord {
        case_id: case.id.clone(),
        cwe: case.cwe,
        config: config.key(),
        class: OutcomeClass::NotRun { reason },
        mode: Mode::Live,
        shadow_stack_enforced: false,
    }
}

fn run_cell(builder: &Builder, spec: &GridSpec, case: &TestCase, config: &BuildConfig) -> Result<CellResult> {
    let mut cell = CellResult::default();
    let built = builder.build(case, config);
    cell.build = Some(BuildRecord::from_result(&case.id, config, &built));

    let enforce = config.variant.shadow_stack && spec.capability.supported();
    let wants_prediction = config.variant.shadow_stack && !enforce;

    let binary = match built {
        Ok(binary) => binary,
        Err(Error::UnsupportedVariant { .. }) => {
            cell.records.extend(predict_record(case, config)?);
            return Ok(cell);
        }
        Err(Error::BuildFailed { .. }) => {
            cell.records.push(not_run(case, config, "build failed".into()));
            if wants_prediction {
                cell.records.extend(predict_record(case, config)?);
            }
            return Ok(cell);
        }
        Err(e) => return Err(e),
    };

    let env = spec.env.with_enforcement(enforce);
    match run(&binary, &env) {
        Ok(outcome) => {
            cell.records.push(DetectionRecord {
                case_id: case.id.clone(),
                cwe: case.cwe,
                config: config.key(),
                class: classify(&outcome),
                mode: Mode::Live,
                shadow_stack_enforced: enforce,
            });
            cell.outcome = Some(outcome);
        }
        Err(e) => {
            warn!("{} under {}: {e}", case.id, config.key());
            cell.records.push(not_run(case, config, e.to_string()));
        }
    }
    if wants_prediction {
        cell.records.extend(predict_record(case, config)?);
    }
    Ok(cell)
}

/// Build and run every (case, config) pair. Output order is deterministic
/// regardless of scheduling.
pub fn run_grid(builder: &Builder, spec: &GridSpec) -> Result<GridResult> {
    spec.env.validate(&spec.capability)?;
    let pairs: Vec<(&TestCase, &BuildConfig)> = spec
        .cases
        .iter()
        .flat_map(|case| spec.configs.iter().map(move |config| (case, config)))
        .collect();
    info!(
        "grid: {} cases x {} configs, shadow stack {}",
        spec.cases.len(),
        spec.configs.len(),
        spec.capability
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::Runner(format!("cannot start worker pool: {e}")))?;
    let cells: Vec<Result<CellResult>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(case, config)| run_cell(builder, spec, case, config))
            .collect()
    });

    let mut result = GridResult::default();
    for cell in cells {
        let cell = cell?;
        result.builds.extend(cell.build);
        result.outcomes.extend(cell.outcome);
        result.records.extend(cell.records);
    }
    result
        .builds
        .sort_by(|a, b| (&a.case_id, &a.config).cmp(&(&b.case_id, &b.config)));
    result
        .outcomes
        .sort_by(|a, b| (&a.case_id, &a.config).cmp(&(&b.case_id, &b.config)));
    result
        .records
        .sort_by(|a, b| (&a.case_id, &a.config, a.mode).cmp(&(&b.case_id, &b.config, b.mode)));
    Ok(result)
}
