use std::ffi::CStr;
use std::fmt;
use std::fs;

use serde::{Deserialize, Serialize};

/// Host support for user-space shadow stacks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowStackCapability {
    pub cpu_supported: bool,
    pub kernel_supported: bool,
    pub glibc_tunable_available: bool,
}

impl ShadowStackCapability {
    /// Live shadow-stack runs need all three.
    pub fn supported(&self) -> bool {
        self.cpu_supported && self.kernel_supported && self.glibc_tunable_available
    }
}

impl fmt::Display for ShadowStackCapability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cpu={} kernel={} glibc={}",
            self.cpu_supported, self.kernel_supported, self.glibc_tunable_available
        )
    }
}

fn cpuinfo_flags(cpuinfo: &str) -> Vec<&str> {
    cpuinfo
        .lines()
        .find(|l| l.starts_with("flags"))
        .and_then(|l| l.split_once(':'))
        .map(|(_, flags)| flags.split_whitespace().collect())
        .unwrap_or_default()
}

fn glibc_at_least(version: &str, major: u32, minor: u32) -> bool {
    let mut parts = version.trim().split('.').map(|p| p.parse::<u32>().unwrap_or(0));
    let found = (parts.next().unwrap_or(0), parts.next().unwrap_or(0));
    found >= (major, minor)
}

/// Decide support from raw host facts.
///
/// `cpuid_shstk` is CPUID.(EAX=7,ECX=0):ECX bit 7. `kconfig` is the running
/// kernel's build configuration, when available.
pub fn assess_shadow_stack_support(
    cpuid_shstk: bool,
    cpuinfo: &str,
    proc_status: &str,
    kconfig: Option<&str>,
    glibc_version: &str,
) -> ShadowStackCapability {
    let flags = cpuinfo_flags(cpuinfo);
    let cpu_supported = cpuid_shstk || flags.contains(&"shstk") || flags.contains(&"user_shstk");
    let kernel_supported = flags.contains(&"user_shstk")
        || proc_status.lines().any(|l| l.starts_with("x86_Thread_features"))
        || kconfig.is_some_and(|c| c.lines().any(|l| l.trim() == "CONFIG_X86_USER_SHADOW_STACK=y"));
    ShadowStackCapability {
        cpu_supported,
        kernel_supported,
        glibc_tunable_available: glibc_at_least(glibc_version, 2, 39),
    }
}

#[cfg(target_arch = "x86_64")]
fn cpuid_shstk() -> bool {
    let leaf = std::arch::x86_64::__cpuid_count(7, 0);
    leaf.ecx & (1 << 7) != 0
}

#[cfg(not(target_arch = "x86_64"))]
fn cpuid_shstk() -> bool {
    false
}

fn libc_version() -> String {
    // SAFETY: glibc returns a pointer to a static NUL-terminated string.
    unsafe { CStr::from_ptr(libc::gnu_get_libc_version()) }
        .to_string_lossy()
        .into_owned()
}

fn kernel_config() -> Option<String> {
    let release = fs::read_to_string("/proc/sys/kernel/osrelease").ok()?;
    fs::read_to_string(format!("/boot/config-{}", release.trim())).ok()
}

/// Inspect the running host.
pub fn probe_shadow_stack_support() -> ShadowStackCapability {
    let cpuinfo = fs::read_to_string("/proc/cpuinfo").unwrap_or_default();
    let status = fs::read_to_string("/proc/self/status").unwrap_or_default();
    let kconfig = kernel_config();
    assess_shadow_stack_support(
        cpuid_shstk(),
        &cpuinfo,
        &status,
        kconfig.as_deref(),
        &libc_version(),
    )
}
