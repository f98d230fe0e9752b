use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use log::{debug, warn};
use sha2::{Digest, Sha256};

use super::{translate_flags, Binary, BuildConfig, BuildLog, OptLevel, Toolchain};
use crate::corpus::{CaseVariant, Origin, TestCase};
use crate::frame_model::ProtectionVariant;
use crate::{Error, Result};

const PROBE_SOURCE: &str = "int main(void)\n{\n    volatile char b[16]; b[0] = 0; return b[0];\n}\n";

/// Juliet support sources linked into every Juliet binary.
const SUPPORT_SOURCES: [&str; 2] = ["io.c", "std_thread.c"];

type ProbeKey = (PathBuf, Vec<String>);

/// Compiles test cases into `out_dir/<config>/<case>/`.
///
/// Safe to share across threads. Flag probes and Juliet support objects are
/// computed once per toolchain and configuration.
pub struct Builder {
    out_dir: PathBuf,
    juliet_support: Option<PathBuf>,
    probes: Mutex<HashMap<ProbeKey, std::result::Result<(), String>>>,
    support: Mutex<HashMap<String, std::result::Result<Vec<PathBuf>, String>>>,
    counter: AtomicU64,
}

struct DriverRun {
    success: bool,
    diagnostics: String,
}

fn run_driver(driver: &Path, args: &[String]) -> Result<DriverRun> {
    let out = Command::new(driver)
        .args(args)
        .env("LC_ALL", "C")
        .output()
        .map_err(|e| Error::io(format!("running {}", driver.display()), e))?;
    let mut diagnostics = String::from_utf8_lossy(&out.stderr).into_owned();
    diagnostics.push_str(&String::from_utf8_lossy(&out.stdout));
    Ok(DriverRun {
        success: out.status.success(),
        diagnostics,
    })
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl Builder {
    pub fn new(out_dir: impl Into<PathBuf>) -> Result<Self> {
        let out_dir = out_dir.into();
        fs::create_dir_all(&out_dir)
            .map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
        Ok(Builder {
            out_dir,
            juliet_support: None,
            probes: Mutex::new(HashMap::new()),
            support: Mutex::new(HashMap::new()),
            counter: AtomicU64::new(0),
        })
    }

    /// Directory holding Juliet's `std_testcase.h`, `io.c` and friends.
    pub fn with_juliet_support(mut self, dir: Option<PathBuf>) -> Self {
        self.juliet_support = dir;
        self
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    fn temp_path(&self, target: &Path) -> PathBuf {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let mut name = target.file_name().unwrap_or_default().to_os_string();
        name.push(format!(".tmp{}-{n}", std::process::id()));
        target.with_file_name(name)
    }

    fn create_dir(dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
    }

    /// Check once per (toolchain, variant) that the driver accepts the
    /// variant's flags.
    pub fn probe_variant(&self, toolchain: &Toolchain, variant: &ProtectionVariant) -> Result<()> {
        let mut flags = translate_flags(variant, OptLevel::O0);
        flags.pop();
        let key = (toolchain.driver.clone(), flags.clone());

        let cached = self.probes.lock().unwrap().get(&key).cloned();
        let verdict = match cached {
            Some(v) => v,
            None => {
                let dir = self.out_dir.join(".probe");
                Self::create_dir(&dir)?;
                let source = dir.join("probe.c");
                if !source.exists() {
                    let tmp = self.temp_path(&source);
                    fs::write(&tmp, PROBE_SOURCE)
                        .map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
                    fs::rename(&tmp, &source)
                        .map_err(|e| Error::io(format!("writing {}", source.display()), e))?;
                }
                let object = self.temp_path(&dir.join("probe.o"));
                let mut args = flags.clone();
                args.extend([
                    "-c".into(),
                    source.display().to_string(),
                    "-o".into(),
                    object.display().to_string(),
                ]);
                let run = run_driver(&toolchain.driver, &args)?;
                let _ = fs::remove_file(&object);
                let v = if run.success { Ok(()) } else { Err(run.diagnostics) };
                debug!("probe {} {:?}: {}", toolchain.label(), flags, v.is_ok());
                self.probes.lock().unwrap().insert(key, v.clone());
                v
            }
        };
        verdict.map_err(|diagnostics| Error::UnsupportedVariant {
            toolchain: toolchain.label(),
            flags: flags.join(" "),
            diagnostics,
        })
    }

    fn support_objects(&self, config: &BuildConfig, support_dir: &Path) -> Result<Vec<PathBuf>> {
        let slug = config.key().slug();
        let mut cache = self.support.lock().unwrap();
        if let Some(v) = cache.get(&slug) {
            return v.clone().map_err(|log| Error::BuildFailed {
                case_id: "juliet-support".into(),
                log,
            });
        }
        let dir = self.out_dir.join(&slug).join("support");
        Self::create_dir(&dir)?;
        let mut objects = Vec::new();
        let mut failure = None;
        for name in SUPPORT_SOURCES {
            let source = support_dir.join(name);
            if !source.is_file() {
                continue;
            }
            let object = dir.join(name.replace(".c", ".o"));
            let tmp = self.temp_path(&object);
            let mut args = config.flags();
            args.extend([
                "-I".into(),
                support_dir.display().to_string(),
                "-c".into(),
                source.display().to_string(),
                "-o".into(),
                tmp.display().to_string(),
            ]);
            let run = run_driver(&config.toolchain.driver, &args)?;
            if !run.success {
                failure = Some(format!("$ {} {}\n{}", config.toolchain.driver.display(), args.join(" "), run.diagnostics));
                let _ = fs::remove_file(&tmp);
                break;
            }
            fs::rename(&tmp, &object)
                .map_err(|e| Error::io(format!("writing {}", object.display()), e))?;
            objects.push(object);
        }
        let v = match failure {
            Some(log) => Err(log),
            None => Ok(objects),
        };
        cache.insert(slug, v.clone());
        v.map_err(|log| Error::BuildFailed {
            case_id: "juliet-support".into(),
            log,
        })
    }

    /// Compile and link `case` under `config`.
    pub fn build(&self, case: &TestCase, config: &BuildConfig) -> Result<Binary> {
        config.variant.validate()?;
        self.probe_variant(&config.toolchain, &config.variant)?;
        if case.sources.is_empty() {
            return Err(Error::BuildFailed {
                case_id: case.id.clone(),
                log: "case has no sources".into(),
            });
        }

        let dir = self.out_dir.join(config.key().slug()).join(&case.id);
        Self::create_dir(&dir)?;
        let path = dir.join(&case.id);
        let tmp = self.temp_path(&path);

        let mut args = config.flags();
        let mut objects = Vec::new();
        if case.origin == Origin::Juliet {
            if let Some(support) = &self.juliet_support {
                objects = self.support_objects(config, support).map_err(|e| match e {
                    Error::BuildFailed { log, .. } => Error::BuildFailed {
                        case_id: case.id.clone(),
                        log,
                    },
                    other => other,
                })?;
                args.extend(["-I".into(), support.display().to_string()]);
            }
            args.push("-DINCLUDEMAIN".into());
            args.push(match case.variant {
                CaseVariant::Bad => "-DOMITGOOD".into(),
                CaseVariant::Good => "-DOMITBAD".into(),
            });
        }
        args.extend(case.sources.iter().map(|s| s.display().to_string()));
        args.extend(objects.iter().map(|o| o.display().to_string()));
        args.extend(["-o".into(), tmp.display().to_string()]);
        if case.origin == Origin::Juliet {
            args.extend(["-lpthread".into(), "-lm".into()]);
            if case.sources.iter().any(|s| s.extension().is_some_and(|e| e == "cpp")) {
                args.push("-lstdc++".into());
            }
        }

        let run = run_driver(&config.toolchain.driver, &args)?;
        let mut command = vec![config.toolchain.driver.display().to_string()];
        command.extend(args.iter().map(|a| {
            if a == &tmp.display().to_string() {
                path.display().to_string()
            } else {
                a.clone()
            }
        }));
        if !run.success {
            let _ = fs::remove_file(&tmp);
            warn!("build of {} under {} failed", case.id, config.key());
            return Err(Error::BuildFailed {
                case_id: case.id.clone(),
                log: format!("$ {}\n{}", command.join(" "), run.diagnostics),
            });
        }
        fs::rename(&tmp, &path).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;

        Ok(Binary {
            case_id: case.id.clone(),
            config: config.clone(),
            content_hash: hash_file(&path)?,
            path,
            build_log: BuildLog {
                command,
                diagnostics: run.diagnostics,
            },
        })
    }
}
