use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::ptr;
use std::thread;
use std::time::{Duration, Instant};

use log::debug;

use super::{RunEnvironment, RunOutcome, Termination};
use crate::build_matrix::Binary;
use crate::{Error, Result};

/// Signal information captured at the last signal-delivery stop.
#[derive(Clone, Copy)]
struct Delivered {
    signal: i32,
    si_code: i32,
    addr_is_null: bool,
}

fn reader<R: Read + Send + 'static>(stream: Option<R>) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut s) = stream {
            let _ = s.read_to_end(&mut buf);
        }
        buf
    })
}

fn kill_group(pid: libc::pid_t) {
    // SAFETY: plain kill(2) calls; the child is its own process group leader.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
        libc::kill(pid, libc::SIGKILL);
    }
}

/// Run `binary` under `env`.
pub fn run(binary: &Binary, env: &RunEnvironment) -> Result<RunOutcome> {
    let mut outcome = run_executable(&binary.path, &binary.case_id, env)?;
    outcome.config = Some(binary.config.key());
    Ok(outcome)
}

/// Run an arbitrary executable under `env`.
///
/// The child is traced so that the `si_code` and fault address of a fatal
/// signal can be read before the signal is delivered. If tracing is not
/// permitted the run proceeds untraced and those fields stay empty.
pub fn run_executable(path: &Path, case_id: &str, env: &RunEnvironment) -> Result<RunOutcome> {
    let mut cmd = Command::new(path);
    cmd.env_clear()
        .envs(env.child_environment())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if let Some(dir) = &env.working_dir {
        cmd.current_dir(dir);
    }
    let disable_aslr = env.aslr_disabled;
    // SAFETY: only async-signal-safe system calls run between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            libc::setpgid(0, 0);
            if disable_aslr {
                let current = libc::personality(0xffff_ffff);
                if current != -1 {
                    libc::personality(current as libc::c_ulong | libc::ADDR_NO_RANDOMIZE as libc::c_ulong);
                }
            }
            libc::prctl(libc::PR_SET_PDEATHSIG, libc::SIGKILL);
            libc::ptrace(
                libc::PTRACE_TRACEME,
                0,
                ptr::null_mut::<libc::c_void>(),
                ptr::null_mut::<libc::c_void>(),
            );
            Ok(())
        });
    }

    let start = Instant::now();
    let mut child = cmd
        .spawn()
        .map_err(|e| Error::Runner(format!("cannot start {}: {e}", path.display())))?;
    let pid = child.id() as libc::pid_t;
    let stdout = reader(child.stdout.take());
    let stderr = reader(child.stderr.take());

    let deadline = start + env.timeout;
    let mut traced = false;
    let mut timed_out = false;
    let mut delivered: Option<Delivered> = None;
    let mut nap = Duration::from_micros(200);

    let termination = loop {
        let mut status: libc::c_int = 0;
        // SAFETY: waitpid on our own child.
        let r = unsafe { libc::waitpid(pid, &mut status, libc::WNOHANG | libc::__WALL) };
        if r == 0 {
            if !timed_out && Instant::now() >= deadline {
                debug!("{case_id}: timeout after {:?}", env.timeout);
                timed_out = true;
                kill_group(pid);
            }
            thread::sleep(nap);
            nap = (nap * 2).min(Duration::from_millis(5));
            continue;
        }
        if r < 0 {
            let err = std::io::Error::last_os_error();
            if err.raw_os_error() == Some(libc::EINTR) {
                continue;
            }
            kill_group(pid);
            return Err(Error::Runner(format!("waitpid for {case_id}: {err}")));
        }

        if libc::WIFEXITED(status) {
            break Termination::Exited {
                code: libc::WEXITSTATUS(status),
            };
        }
        if libc::WIFSIGNALED(status) {
            break Termination::Signaled {
                signal: libc::WTERMSIG(status),
            };
        }
        if libc::WIFSTOPPED(status) {
            let sig = libc::WSTOPSIG(status);
            // SAFETY: ptrace requests on a stopped tracee we own.
            unsafe {
                if !traced && sig == libc::SIGTRAP {
                    // the stop after execve
                    traced = true;
                    libc::ptrace(
                        libc::PTRACE_SETOPTIONS,
                        pid,
                        ptr::null_mut::<libc::c_void>(),
                        libc::PTRACE_O_EXITKILL as libc::c_ulong as *mut libc::c_void,
                    );
                    libc::ptrace(libc::PTRACE_CONT, pid, ptr::null_mut::<libc::c_void>(), ptr::null_mut::<libc::c_void>());
                    continue;
                }
                let mut info: libc::siginfo_t = std::mem::zeroed();
                let got = libc::ptrace(
                    libc::PTRACE_GETSIGINFO,
                    pid,
                    ptr::null_mut::<libc::c_void>(),
                    &mut info as *mut libc::siginfo_t as *mut libc::c_void,
                );
                if got == 0 {
                    delivered = Some(Delivered {
                        signal: sig,
                        si_code: info.si_code,
                        addr_is_null: info.si_addr().is_null(),
                    });
                }
                libc::ptrace(
                    libc::PTRACE_CONT,
                    pid,
                    ptr::null_mut::<libc::c_void>(),
                    sig as libc::c_long as *mut libc::c_void,
                );
            }
        }
    };
    // grandchildren left in the group would keep the pipes open
    kill_group(pid);
    let duration = start.elapsed();
    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();

    let termination = if timed_out {
        Termination::TimedOut
    } else {
        termination
    };
    let (si_code, fault_addr_is_null) = match (termination, delivered) {
        (Termination::Signaled { signal }, Some(d)) if d.signal == signal => {
            (Some(d.si_code), Some(d.addr_is_null))
        }
        _ => (None, None),
    };

    Ok(RunOutcome {
        case_id: case_id.to_string(),
        config: None,
        termination,
        si_code,
        fault_addr_is_null,
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
        duration_ms: duration.as_millis() as u64,
        preload_shim_active: env.preload_shim.is_some(),
    })
}
