//! Deterministic execution of test binaries.

mod capability;
mod process;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::build_matrix::ConfigKey;
use crate::{Error, Result};

pub use capability::{assess_shadow_stack_support, probe_shadow_stack_support, ShadowStackCapability};
pub use process::{run, run_executable};

/// Dynamic-linker preload variable used to load the seed shim.
pub const PRELOAD_VAR: &str = "LD_PRELOAD";
/// Carries the fixed seed to the shim.
pub const SEED_VAR: &str = "STACKLAB_FIXED_SEED";
pub const TUNABLES_VAR: &str = "GLIBC_TUNABLES";
pub const SHADOW_STACK_TUNABLE: &str = "glibc.cpu.hwcaps=SHSTK";
/// Exit status the seed shim uses when it cannot resolve the real seeding
/// function.
pub const SHIM_UNRESOLVED_EXIT_CODE: i32 = 213;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunEnvironment {
    pub aslr_disabled: bool,
    /// Names of harness environment variables passed through to the child.
    /// Everything else is dropped.
    #[serde(default)]
    pub env_allowlist: Vec<String>,
    #[serde(default)]
    pub preload_shim: Option<PathBuf>,
    pub fixed_seed: u64,
    #[serde(default)]
    pub shadow_stack_enforced: bool,
    pub timeout: Duration,
    #[serde(default)]
    pub working_dir: Option<PathBuf>,
}

impl Default for RunEnvironment {
    fn default() -> Self {
        RunEnvironment {
            aslr_disabled: true,
            env_allowlist: Vec::new(),
            preload_shim: None,
            fixed_seed: DEFAULT_SEED,
            shadow_stack_enforced: false,
            timeout: DEFAULT_TIMEOUT,
            working_dir: None,
        }
    }
}

impl RunEnvironment {
    /// The complete environment of the child, sorted by name.
    pub fn child_environment(&self) -> Vec<(String, String)> {
        let mut vars: Vec<(String, String)> = self
            .env_allowlist
            .iter()
            .filter_map(|name| std::env::var(name).ok().map(|v| (name.clone(), v)))
            .collect();
        if let Some(shim) = &self.preload_shim {
            vars.push((PRELOAD_VAR.into(), shim.display().to_string()));
            vars.push((SEED_VAR.into(), self.fixed_seed.to_string()));
        }
        if self.shadow_stack_enforced {
            vars.push((TUNABLES_VAR.into(), SHADOW_STACK_TUNABLE.into()));
        }
        vars.sort();
        vars.dedup_by(|a, b| a.0 == b.0);
        vars
    }

    /// Reject enforcement on a host that cannot honour it.
    pub fn validate(&self, capability: &ShadowStackCapability) -> Result<()> {
        if self.shadow_stack_enforced && !capability.supported() {
            return Err(Error::InvalidConfig(format!(
                "shadow stack enforcement requested but host support is {capability}"
            )));
        }
        if self.timeout.is_zero() {
            return Err(Error::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }

    /// Copy of this environment with enforcement switched on or off.
    pub fn with_enforcement(&self, enforced: bool) -> Self {
        RunEnvironment {
            shadow_stack_enforced: enforced,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Termination {
    Exited { code: i32 },
    Signaled { signal: i32 },
    TimedOut,
}

/// Everything observed about one execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigKey>,
    pub termination: Termination,
    /// `si_code` of the fatal signal, when it could be captured.
    #[serde(default)]
    pub si_code: Option<i32>,
    #[serde(default)]
    pub fault_addr_is_null: Option<bool>,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    #[serde(default)]
    pub duration_ms: u64,
    /// Whether the seed shim was preloaded.
    #[serde(default)]
    pub preload_shim_active: bool,
}

impl RunOutcome {
    /// An outcome with the given termination and nothing else observed.
    pub fn new(case_id: impl Into<String>, termination: Termination) -> Self {
        RunOutcome {
            case_id: case_id.into(),
            config: None,
            termination,
            si_code: None,
            fault_addr_is_null: None,
            stdout: String::new(),
            stderr: String::new(),
            duration_ms: 0,
            preload_shim_active: false,
        }
    }

    pub fn timed_out(&self) -> bool {
        self.termination == Termination::TimedOut
    }
}
