mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::compile;
use stacklab::classifier::{classify, OutcomeClass};
use stacklab::runner::{run_executable, RunEnvironment, Termination, SHIM_UNRESOLVED_EXIT_CODE};

fn run_default(path: &std::path::Path) -> stacklab::runner::RunOutcome {
    run_executable(path, "fixture", &RunEnvironment::default()).unwrap()
}

#[test]
fn clean_exit() {
    let bin = require!(compile("exit_zero", &["-O0"]));
    let o = run_default(&bin);
    assert_eq!(o.termination, Termination::Exited { code: 0 });
    assert_eq!(o.si_code, None);
    assert_eq!(classify(&o), OutcomeClass::CleanExit { code: 0 });
}

#[test]
fn abort_is_sigabrt_and_undetected() {
    let bin = require!(compile("call_abort", &["-O0"]));
    let o = run_default(&bin);
    assert_eq!(o.termination, Termination::Signaled { signal: libc::SIGABRT });
    assert_eq!(classify(&o), OutcomeClass::UndetectedCrash { signal: libc::SIGABRT });
}

#[test]
fn canary_failure_is_detected() {
    let bin = require!(compile(
        "canary_fail",
        &["-O0", "-fstack-protector-all", "-U_FORTIFY_SOURCE"]
    ));
    let o = run_default(&bin);
    assert!(
        o.stderr.contains("*** stack smashing detected ***: terminated"),
        "{:?}",
        o.stderr
    );
    assert_eq!(o.termination, Termination::Signaled { signal: libc::SIGABRT });
    assert_eq!(classify(&o), OutcomeClass::CanaryDetected);
}

#[test]
fn null_dereference_captures_siginfo() {
    let bin = require!(compile("null_deref", &["-O0"]));
    let o = run_default(&bin);
    assert_eq!(o.termination, Termination::Signaled { signal: libc::SIGSEGV });
    // SEGV_MAPERR (1) at address zero, read from the traced child
    assert_eq!(o.si_code, Some(1));
    assert_eq!(o.fault_addr_is_null, Some(true));
    assert_eq!(classify(&o), OutcomeClass::UndetectedCrash { signal: libc::SIGSEGV });
}

#[test]
fn bus_error_and_fpe() {
    let bin = require!(compile("raise_bus", &["-O0"]));
    let o = run_default(&bin);
    assert_eq!(classify(&o), OutcomeClass::UndetectedCrash { signal: libc::SIGBUS });

    let bin = require!(compile("divide", &["-O0"]));
    let o = run_default(&bin);
    assert_eq!(classify(&o), OutcomeClass::UndetectedCrash { signal: libc::SIGFPE });
    // FPE_INTDIV
    assert_eq!(o.si_code, Some(1));
}

#[test]
fn environment_is_exactly_the_allowlist() {
    let bin = require!(compile("env_dump", &["-O0"]));
    let o = run_default(&bin);
    assert_eq!(o.stdout, "");

    let env = RunEnvironment {
        env_allowlist: vec!["PATH".into()],
        shadow_stack_enforced: true,
        ..RunEnvironment::default()
    };
    let o = run_executable(&bin, "env", &env).unwrap();
    let mut lines: Vec<&str> = o.stdout.lines().collect();
    lines.sort();
    let expected_path = format!("PATH={}", std::env::var("PATH").unwrap());
    assert_eq!(lines, ["GLIBC_TUNABLES=glibc.cpu.hwcaps=SHSTK", expected_path.as_str()]);
}

#[test]
fn shim_variables_are_exported() {
    let bin = require!(compile("env_dump", &["-O0"]));
    // an empty LD_PRELOAD entry that does not exist only makes ld.so warn
    let shim = PathBuf::from("/nonexistent/libstacklab_seed.so");
    let env = RunEnvironment {
        preload_shim: Some(shim.clone()),
        fixed_seed: 1234,
        ..RunEnvironment::default()
    };
    let o = run_executable(&bin, "env", &env).unwrap();
    assert!(o.preload_shim_active);
    let lines: Vec<&str> = o.stdout.lines().collect();
    assert!(lines.contains(&"STACKLAB_FIXED_SEED=1234"));
    assert!(lines.contains(&format!("LD_PRELOAD={}", shim.display()).as_str()));
}

#[test]
fn shim_failure_exit_is_not_run() {
    let bin = require!(compile("exit_code", &["-O0"]));
    let env = RunEnvironment {
        preload_shim: Some(PathBuf::from("/nonexistent/libstacklab_seed.so")),
        ..RunEnvironment::default()
    };
    let o = run_executable(&bin, "shim", &env).unwrap();
    assert_eq!(o.termination, Termination::Exited { code: SHIM_UNRESOLVED_EXIT_CODE });
    assert!(matches!(classify(&o), OutcomeClass::NotRun { .. }));
}

#[test]
fn timeout_kills_within_grace() {
    let bin = require!(compile("spin", &["-O0"]));
    let env = RunEnvironment {
        timeout: Duration::from_millis(300),
        ..RunEnvironment::default()
    };
    let start = Instant::now();
    let o = run_executable(&bin, "spin", &env).unwrap();
    assert!(start.elapsed() < Duration::from_millis(1300));
    assert!(o.timed_out());
    assert_eq!(classify(&o), OutcomeClass::Timeout);
}

#[test]
fn lingering_grandchildren_do_not_hold_the_run() {
    let bin = require!(compile("noisy_fork", &["-O0"]));
    let start = Instant::now();
    let o = run_default(&bin);
    assert_eq!(o.termination, Termination::Exited { code: 0 });
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn aslr_is_disabled_per_process() {
    let bin = require!(compile("stack_addr", &["-O0"]));
    let a = run_default(&bin);
    let b = run_default(&bin);
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn repeated_runs_are_deterministic() {
    let bin = require!(compile(
        "canary_fail",
        &["-O0", "-fstack-protector-all", "-U_FORTIFY_SOURCE"]
    ));
    let a = run_default(&bin);
    let b = run_default(&bin);
    assert_eq!(a.termination, b.termination);
    assert_eq!(a.si_code, b.si_code);
    assert_eq!(a.stderr, b.stderr);
}

#[test]
fn missing_binary_is_a_runner_error() {
    let err = run_executable(
        std::path::Path::new("/nonexistent/binary"),
        "x",
        &RunEnvironment::default(),
    )
    .unwrap_err();
    assert!(matches!(err, stacklab::Error::Runner(_)));
}
