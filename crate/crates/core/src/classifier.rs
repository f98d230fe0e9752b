//! Outcome classification.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::runner::{RunOutcome, Termination, SHIM_UNRESOLVED_EXIT_CODE};

/// Substring glibc writes to stderr when a canary check fails.
pub const CANARY_MESSAGE: &str = "*** stack smashing detected ***";

/// `si_code` of a control-protection fault. Not exported by every libc
/// header set, hence the literal (the value from the Linux uapi headers).
pub const SEGV_CPERR: i32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum OutcomeClass {
    CanaryDetected,
    ShadowStackDetected,
    UndetectedCrash { signal: i32 },
    CleanExit { code: i32 },
    Timeout,
    NotRun { reason: String },
}

impl OutcomeClass {
    pub fn is_detection(&self) -> bool {
        matches!(self, OutcomeClass::CanaryDetected | OutcomeClass::ShadowStackDetected)
    }
}

pub fn signal_name(signal: i32) -> String {
    let name = match signal {
        libc::SIGABRT => "SIGABRT",
        libc::SIGBUS => "SIGBUS",
        libc::SIGFPE => "SIGFPE",
        libc::SIGILL => "SIGILL",
        libc::SIGKILL => "SIGKILL",
        libc::SIGSEGV => "SIGSEGV",
        libc::SIGTRAP => "SIGTRAP",
        libc::SIGSYS => "SIGSYS",
        libc::SIGTERM => "SIGTERM",
        libc::SIGPIPE => "SIGPIPE",
        _ => return format!("signal {signal}"),
    };
    name.to_string()
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeClass::CanaryDetected => f.write_str("CanaryDetected"),
            OutcomeClass::ShadowStackDetected => f.write_str("ShadowStackDetected"),
            OutcomeClass::UndetectedCrash { signal } => {
                write!(f, "UndetectedCrash({})", signal_name(*signal))
            }
            OutcomeClass::CleanExit { code } => write!(f, "CleanExit({code})"),
            OutcomeClass::Timeout => f.write_str("Timeout"),
            OutcomeClass::NotRun { reason } => write!(f, "NotRun({reason})"),
        }
    }
}

/// Map an outcome to its class.
///
/// The canary message wins over everything: it is printed before the
/// process aborts, so a run carrying it was stopped by the canary check even
/// if a later fault was also observed. Any other fatal signal, including an
/// abort without the message, is an undetected crash.
pub fn classify(outcome: &RunOutcome) -> OutcomeClass {
    if outcome.stderr.contains(CANARY_MESSAGE) {
        return OutcomeClass::CanaryDetected;
    }
    match outcome.termination {
        Termination::Signaled { signal } => {
            if signal == libc::SIGSEGV
                && outcome.si_code == Some(SEGV_CPERR)
                && outcome.fault_addr_is_null == Some(true)
            {
                OutcomeClass::ShadowStackDetected
            } else {
                OutcomeClass::UndetectedCrash { signal }
            }
        }
        Termination::Exited { code } if code == SHIM_UNRESOLVED_EXIT_CODE && outcome.preload_shim_active => {
            OutcomeClass::NotRun {
                reason: "seed shim could not resolve the seeding function".into(),
            }
        }
        Termination::Exited { code } => OutcomeClass::CleanExit { code },
        Termination::TimedOut => OutcomeClass::Timeout,
    }
}
