use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::warn;

use stacklab::build_matrix::{
    read_jsonl, write_jsonl, BuildConfig, BuildRecord, Builder, OptLevel, Toolchain,
};
use stacklab::corpus::{
    generate_synthetic, ingest_juliet, load_synthetic, select, summarize, NeighborKind,
    NeighborSlot, OverflowDirection, SyntheticSpec, TestCase, WriteKind,
};
use stacklab::frame_model::ProtectionVariant;
use stacklab::grid::{run_grid, GridSpec};
use stacklab::report::{
    aggregate, check_findings, compare_to_reference, emit, parse_json, DetectionRecord,
    DetectionTable, Format, ReferenceData,
};
use stacklab::runner::{probe_shadow_stack_support, RunEnvironment, ShadowStackCapability};
use stacklab::{Error, Result};

#[derive(Parser)]
#[command(name = "stacklab", version, about = "Stack canary and shadow stack detection harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a Juliet tree and print per-CWE selection counts.
    Ingest {
        #[arg(long)]
        juliet: PathBuf,
        /// Also write every case as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate one synthetic overflow program.
    Generate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build every case under every configuration.
    Build {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build, run and classify the whole grid.
    Run {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Aggregate detection records, or the bundled reference data.
    Report {
        /// records.jsonl written by `run`; the bundled reference data when omitted.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Compare live cells against the reference counts.
        #[arg(long)]
        compare_reference: bool,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Predict the outcome of a synthetic overflow with the frame model.
    Predict {
        #[command(flatten)]
        spec: SpecArgs,
        /// Variant short names; every table row when omitted.
        #[arg(long = "variant")]
        variants: Vec<ProtectionVariant>,
    },
    /// Check the published orderings against a table.
    CheckFindings {
        /// A table written with `--format json`.
        #[arg(long, conflicts_with = "records")]
        table: Option<PathBuf>,
        #[arg(long)]
        records: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long)]
    buffer_size: u64,
    #[arg(long)]
    overflow_length: u64,
    /// Write below the buffer instead of past its end.
    #[arg(long)]
    underwrite: bool,
    /// Use strcpy with a terminating NUL instead of a store loop.
    #[arg(long)]
    string_copy: bool,
    /// Neighbouring local as KIND:SIZE, KIND one of char-array, int-array,
    /// addr-taken, plain.
    #[arg(long = "neighbor", value_parser = parse_neighbor)]
    neighbors: Vec<NeighborSlot>,
    #[arg(long, default_value_t = 1)]
    call_depth: u32,
}

impl SpecArgs {
    fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            buffer_size: self.buffer_size,
            overflow_length: self.overflow_length,
            direction: if self.underwrite {
                OverflowDirection::Underwrite
            } else {
                OverflowDirection::Overflow
            },
            neighbor_slots: self.neighbors.clone(),
            write_kind: if self.string_copy {
                WriteKind::StringCopyWithTerminator
            } else {
                WriteKind::LoopStore
            },
            call_depth: self.call_depth,
        }
    }
}

fn parse_neighbor(s: &str) -> std::result::Result<NeighborSlot, String> {
    let (kind, size) = s.split_once(':').ok_or("expected KIND:SIZE")?;
    let kind = match kind {
        "char-array" => NeighborKind::CharArray,
        "int-array" => NeighborKind::IntArray,
        "addr-taken" => NeighborKind::AddrTaken,
        "plain" => NeighborKind::Plain,
        other => return Err(format!("unknown neighbour kind {other:?}")),
    };
    let size = size.parse().map_err(|e| format!("bad size: {e}"))?;
    Ok(NeighborSlot { kind, size })
}

#[derive(Args)]
struct CorpusArgs {
    /// Juliet 1.3 root; selected cases only.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    juliet: Option<PathBuf>,
    /// Directory of generated synthetic cases.
    #[arg(long)]
    synthetic: Option<PathBuf>,
}

impl CorpusArgs {
    fn load(&self) -> Result<(Vec<TestCase>, Option<PathBuf>)> {
        match (&self.juliet, &self.synthetic) {
            (Some(root), _) => {
                let corpus = ingest_juliet(root)?;
                Ok((select(&corpus.cases), corpus.support_dir))
            }
            (None, Some(dir)) => Ok((load_synthetic(dir)?, None)),
            (None, None) => Err(Error::InvalidConfig("no corpus given".into())),
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Compiler driver; gcc and clang when omitted.
    #[arg(long = "cc")]
    compilers: Vec<PathBuf>,
    #[arg(long = "opt", default_values = ["O0", "O2"])]
    opt_levels: Vec<OptLevel>,
    /// Variant short names such as `all`, `protector4+shstk`,
    /// `layout-strong+shstk`; every table row when omitted.
    #[arg(long = "variant")]
    variants: Vec<ProtectionVariant>,
    #[arg(long = "extra-flag", allow_hyphen_values = true)]
    extra_flags: Vec<String>,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl ConfigArgs {
    fn configs(&self) -> Result<Vec<BuildConfig>> {
        let explicit = !self.compilers.is_empty();
        let drivers = if explicit {
            self.compilers.clone()
        } else {
            vec![PathBuf::from("gcc"), PathBuf::from("clang")]
        };
        let mut toolchains = Vec::new();
        for driver in drivers {
            match Toolchain::probe(&driver) {
                Ok(t) => toolchains.push(t),
                Err(e) if !explicit => warn!("skipping {}: {e}", driver.display()),
                Err(e) => return Err(e),
            }
        }
        if toolchains.is_empty() {
            return Err(Error::InvalidConfig("no usable compiler".into()));
        }
        let variants = if self.variants.is_empty() {
            ProtectionVariant::table_rows()
        } else {
            self.variants.clone()
        };
        let mut configs = Vec::new();
        for toolchain in &toolchains {
            for &opt in &self.opt_levels {
                for &variant in &variants {
                    let mut config = BuildConfig::new(toolchain.clone(), opt, variant);
                    config.extra_flags = self.extra_flags.clone();
                    configs.push(config);
                }
            }
        }
        Ok(configs)
    }
}

#[derive(Args)]
struct EnvArgs {
    #[arg(long, default_value_t = 10.0)]
    timeout: f64,
    /// Seed shim loaded into every child.
    #[arg(long)]
    preload_shim: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    fixed_seed: u64,
    /// Harness environment variable to pass through.
    #[arg(long = "allow-env")]
    allow_env: Vec<String>,
    /// Leave address space randomisation on.
    #[arg(long)]
    keep_aslr: bool,
    /// Never run with shadow stack enforcement, even on capable hosts.
    #[arg(long)]
    no_shadow_stack: bool,
    #[arg(long)]
    working_dir: Option<PathBuf>,
}

impl EnvArgs {
    fn environment(&self) -> Result<RunEnvironment> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(Error::InvalidConfig("timeout must be positive".into()));
        }
        Ok(RunEnvironment {
            aslr_disabled: !self.keep_aslr,
            env_allowlist: self.allow_env.clone(),
            preload_shim: self.preload_shim.clone(),
            fixed_seed: self.fixed_seed,
            shadow_stack_enforced: false,
            timeout: Duration::from_secs_f64(self.timeout),
            working_dir: self.working_dir.clone(),
        })
    }

    fn capability(&self) -> ShadowStackCapability {
        if self.no_shadow_stack {
            ShadowStackCapability::default()
        } else {
            probe_shadow_stack_support()
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn load_table(table: Option<&Path>, records: Option<&Path>) -> Result<DetectionTable> {
    if let Some(path) = table {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        return parse_json(&text);
    }
    if let Some(path) = records {
        let records: Vec<DetectionRecord> = read_jsonl(path)?;
        return aggregate(&records);
    }
    Ok(ReferenceData::bundled().table())
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { juliet, out } => {
            let corpus = ingest_juliet(&juliet)?;
            println!("{:<8} {:>7} {:>9} {:>9}", "CWE", "total", "excluded", "selected");
            for (cwe, c) in summarize(&corpus.cases) {
                println!("CWE{cwe:<5} {:>7} {:>9} {:>9}", c.total, c.excluded, c.selected);
            }
            if !corpus.skipped.is_empty() {
                println!("skipped {} entries", corpus.skipped.len());
            }
            if let Some(out) = out {
                let json = serde_json::to_string_pretty(&corpus)
                    .map_err(|e| Error::json("corpus", e))?;
                write_file(&out, &json)?;
            }
        }
        Command::Generate { spec, out } => {
            let case = generate_synthetic(&spec.spec(), &out)?;
            println!("{}", case.sources[0].display());
        }
        Command::Build { corpus, config, out } => {
            let (cases, support) = corpus.load()?;
            let configs = config.configs()?;
            let builder = Builder::new(&out)?.with_juliet_support(support);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.jobs)
                .build()
                .map_err(|e| Error::Runner(e.to_string()))?;
            let mut records: Vec<BuildRecord> = pool.install(|| {
                use rayon::prelude::*;
                cases
                    .par_iter()
                    .flat_map(|case| {
                        configs
                            .par_iter()
                            .map(|c| BuildRecord::from_result(&case.id, c, &builder.build(case, c)))
                    })
                    .collect()
            });
            records.sort_by(|a, b| (&a.case_id, &a.config).cmp(&(&b.case_id, &b.config)));
            write_jsonl(&out.join("builds.jsonl"), &records)?;
            let built = records
                .iter()
                .filter(|r| r.status == stacklab::build_matrix::BuildStatus::Built)
                .count();
            println!("built {built} of {} binaries", records.len());
        }
        Command::Run {
            corpus,
            config,
            env,
            out,
            format,
        } => {
            let (cases, support) = corpus.load()?;
            create_dir(&out)?;
            let spec = GridSpec {
                cases,
                configs: config.configs()?,
                env: env.environment()?,
                capability: env.capability(),
                jobs: config.jobs,
            };
            let builder = Builder::new(out.join("build"))?.with_juliet_support(support);
            let result = run_grid(&builder, &spec)?;
            write_jsonl(&out.join("builds.jsonl"), &result.builds)?;
            write_jsonl(&out.join("outcomes.jsonl"), &result.outcomes)?;
            write_jsonl(&out.join("records.jsonl"), &result.records)?;
            let table = aggregate(&result.records)?;
            write_file(&out.join("table.json"), &emit(&table, Format::Json)?)?;
            print!("{}", emit(&table, format)?);
        }
        Command::Report {
            records,
            format,
            compare_reference,
            tolerance,
        } => {
            let table = load_table(None, records.as_deref())?;
            print!("{}", emit(&table, format)?);
            if compare_reference {
                let reference = ReferenceData::bundled();
                for c in compare_to_reference(&table, &reference, tolerance) {
                    println!(
                        "{} {} {}: live {} reference {} {}",
                        if c.within_tolerance { "ok  " } else { "diff" },
                        c.variant,
                        c.column,
                        c.live,
                        c.reference,
                        if c.within_tolerance { "" } else { "(outside tolerance)" }
                    );
                }
            }
        }
        Command::Predict { spec, variants } => {
            let spec = spec.spec();
            spec.validate()?;
            let variants = if variants.is_empty() {
                ProtectionVariant::table_rows()
            } else {
                variants
            };
            for variant in variants {
                let (_, p) = spec.predict(&variant)?;
                println!(
                    "{:<24} {:?} canary={} saved_fp={} ret={}",
                    variant.to_string(),
                    p.predicted_class, p.canary_clobbered, p.saved_fp_clobbered, p.return_addr_clobbered
                );
            }
        }
        Command::CheckFindings { table, records } => {
            let table = load_table(table.as_deref(), records.as_deref())?;
            let report = check_findings(&table);
            for f in &report.findings {
                println!("{f}");
            }
            for a in &report.anomalies {
                println!("anomaly: {a}");
            }
            if report.has_failures() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("stacklab: {e}");
            ExitCode::from(2)
        }
    }
}
