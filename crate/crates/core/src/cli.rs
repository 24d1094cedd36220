//! The `omfs` command line: `simulate`, `generate`, `compare` and `validate`.
//!
//! Exit codes: 0 on success, 1 on invalid input (including usage errors),
//! 2 on internal failures. `OMFS_LOG` (`off`, `info`, `debug`) enables
//! diagnostics on standard error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::metrics::{compare_report, entitlement_table, MetricsReport};
use crate::sim::{simulate, SchedulerKind};
use crate::workload::{
    generate_workload, import_swf, parse_config, parse_workload, GeneratorParams, SwfDefaults, SystemConfig,
    WorkloadSpec,
};

#[derive(Debug, Parser)]
#[command(name = "omfs", version, about = "Fair-share scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scheduler and write the event trace.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "omfs")]
        scheduler: SchedulerKind,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed of a `--params` generator file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a synthetic workload in the native format.
    Generate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run several schedulers on one workload and tabulate the results.
    Compare {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "omfs,fcfs,backfill,capped")]
        schedulers: Vec<SchedulerKind>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config (and optionally a workload) without simulating.
    Validate {
        #[arg(long)]
        workload: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Native workload file.
    #[arg(long)]
    workload: Option<PathBuf>,
    /// Standard Workload Format trace.
    #[arg(long)]
    swf: Option<PathBuf>,
    /// Generator parameters (JSON).
    #[arg(long)]
    params: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn read_params(path: &Path, seed: Option<u64>) -> Result<GeneratorParams> {
    let mut params: GeneratorParams =
        serde_json::from_str(&read(path)?).map_err(|e| Error::Generator(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed {
        params.seed = seed;
    }
    Ok(params)
}

fn load_workload(source: &Source, system: &SystemConfig, seed: Option<u64>) -> Result<WorkloadSpec> {
    let workload = if let Some(path) = &source.workload {
        parse_workload(&read(path)?)?
    } else if let Some(path) = &source.swf {
        let defaults = SwfDefaults {
            cpu_total: Some(system.cpu_total),
            users: (!system.users.is_empty()).then(|| system.users.clone()),
            ..SwfDefaults::default()
        };
        let imported = import_swf(&read(path)?, &defaults)?;
        if imported.skipped > 0 {
            log::info!("skipped {} malformed SWF lines", imported.skipped);
        }
        imported.workload
    } else if let Some(path) = &source.params {
        generate_workload(&read_params(path, seed)?)?
    } else {
        unreachable!("clap requires one workload source")
    };
    if seed.is_some() && source.params.is_none() {
        log::info!("--seed only applies to --params workloads; ignored");
    }
    workload.reconcile(system)
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(Error::Io)
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Simulate {
            source,
            config,
            scheduler,
            out: path,
            seed,
        } => {
            let system = parse_config(&read(&config)?)?;
            let workload = load_workload(&source, &system, seed)?;
            let trace = simulate(&workload, &system.policy, scheduler)?;
            let report = MetricsReport::from_trace(&trace, &workload.users, &system.policy)?;
            let csv = trace.to_csv();
            write(&path, csv.as_bytes())?;
            write!(out, "{report}")?;
            writeln!(out, "trace_digest {}", trace.digest())?;
        }
        Command::Generate { params, out: path, seed } => {
            let workload = generate_workload(&read_params(&params, seed)?)?;
            write(&path, workload.to_native().as_bytes())?;
            writeln!(out, "jobs {}", workload.jobs.len())?;
            writeln!(out, "workload_hash {}", workload.hash())?;
        }
        Command::Compare {
            source,
            config,
            schedulers,
            out: path,
            seed,
        } => {
            let system = parse_config(&read(&config)?)?;
            let workload = load_workload(&source, &system, seed)?;
            let mut kinds = schedulers;
            kinds.sort();
            kinds.dedup();
            let results: Vec<Result<MetricsReport>> = thread::scope(|s| {
                let handles: Vec<_> = kinds
                    .iter()
                    .map(|&kind| {
                        let (workload, system) = (&workload, &system);
                        s.spawn(move || {
                            let trace = simulate(workload, &system.policy, kind)?;
                            MetricsReport::from_trace(&trace, &workload.users, &system.policy)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Contract("simulation thread panicked".into()))))
                    .collect()
            });
            let comparison = compare_report(results.into_iter().collect::<Result<Vec<_>>>()?)?;
            write(&path, comparison.to_csv().as_bytes())?;
            write!(out, "{}", comparison.to_text())?;
        }
        Command::Validate { workload, config } => {
            let system = parse_config(&read(&config)?)?;
            let users = match workload {
                Some(path) => {
                    let w = parse_workload(&read(&path)?)?.reconcile(&system)?;
                    writeln!(out, "jobs {}", w.jobs.len())?;
                    w.users
                }
                None => system.users.clone(),
            };
            writeln!(out, "ok")?;
            writeln!(out, "cpu_total {}", system.cpu_total)?;
            writeln!(out, "user percent entitled_cpus")?;
            for (name, percent, cpus) in entitlement_table(&users, system.cpu_total)? {
                writeln!(out, "{name} {percent} {cpus}")?;
            }
        }
    }
    Ok(())
}

fn init_logging() {
    let level = std::env::var("OMFS_LOG").unwrap_or_else(|_| "off".into());
    let _ = env_logger::Builder::new()
        .parse_filters(&level)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Runs the command line with explicit output streams; returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
