//! `zenoline` command-line shell.

pub mod config;
pub mod output;

mod commands;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use rayon::prelude::*;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, apply_set, parse_document, read_document, set_path};
use crate::output::{Artifact, Provenance, RunInfo, Table, write_artifacts};

pub const THREADS_ENV: &str = "ZENOLINE_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] zenoline_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io { .. } => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "zenoline", version, about = "Zeno suppression of photon absorption in fibers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON run configuration; defaults apply to anything left out.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides protocol.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides one config key, e.g. --set protocol.tau=0.05 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Overrides output.directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Free evolution: survival trajectory.
    Simulate(Common),
    /// Repeated QND measurements: per-interval and cumulative survival.
    Zeno(Common),
    /// Decay-regime fit, crossover time and fiber-length sweep.
    Tq(Common),
    /// Homodyne readout error rates and measurement branches.
    Qnd(Common),
    /// Link budget with interior QND devices.
    Plan(Common),
    /// Fiber-loop memory survival per round trip.
    Memory(Common),
    /// Runs one subcommand over a list of values of one config key.
    Sweep(SweepArgs),
    /// Prints the config JSON schema.
    Schema,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Dotted config key to vary.
    #[arg(long)]
    key: String,
    /// Comma-separated values, each read as JSON when possible.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    /// Subcommand to run for each value.
    #[arg(long, value_enum)]
    run: RunKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RunKind {
    Simulate,
    Zeno,
    Tq,
    Qnd,
    Plan,
    Memory,
}

impl RunKind {
    fn name(self) -> &'static str {
        match self {
            RunKind::Simulate => "simulate",
            RunKind::Zeno => "zeno",
            RunKind::Tq => "tq",
            RunKind::Qnd => "qnd",
            RunKind::Plan => "plan",
            RunKind::Memory => "memory",
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("zenoline: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            // fails harmlessly when a pool already exists in this process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => warn!("ignoring {THREADS_ENV}={raw}: expected a positive integer"),
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let (kind, common) = match command {
        Command::Schema => {
            print!("{}", config::schema_json());
            return Ok(());
        }
        Command::Sweep(args) => return sweep(&args),
        Command::Simulate(c) => (RunKind::Simulate, c),
        Command::Zeno(c) => (RunKind::Zeno, c),
        Command::Tq(c) => (RunKind::Tq, c),
        Command::Qnd(c) => (RunKind::Qnd, c),
        Command::Plan(c) => (RunKind::Plan, c),
        Command::Memory(c) => (RunKind::Memory, c),
    };
    let cfg = parse_document(base_document(&common)?)?;
    execute(kind, &cfg)?;
    Ok(())
}

/// Config document with every command-line override applied.
fn base_document(common: &Common) -> Result<Value, CliError> {
    let mut doc = read_document(common.config.as_deref())?;
    for assignment in &common.set {
        apply_set(&mut doc, assignment)?;
    }
    if let Some(seed) = common.seed {
        set_path(&mut doc, "protocol.seed", seed.into())?;
    }
    if let Some(out) = &common.out {
        set_path(&mut doc, "output.directory", out.to_string_lossy().into_owned().into())?;
    }
    Ok(doc)
}

fn provenance(cfg: &RunConfig) -> Provenance {
    Provenance {
        config_sha256: cfg.hash(),
        seed: cfg.seed(),
    }
}

fn execute(kind: RunKind, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let info = RunInfo::start(kind.name());
    let artifacts = commands::run(kind, cfg)?;
    write_artifacts(&cfg.output.directory, &artifacts, &cfg.output.formats, &provenance(cfg), &info)
}

/// Seed of sweep run `index`: the base seed xor a hash of the index, so each
/// run's seed depends only on its position in the list.
pub fn sweep_seed(base: u64, index: usize) -> u64 {
    let digest = Sha256::digest((index as u64).to_le_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    base ^ u64::from_le_bytes(word)
}

pub fn sweep_dir(base: &Path, index: usize) -> PathBuf {
    base.join(format!("run_{index:03}"))
}

fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let doc = base_document(&args.common)?;
    let base = parse_document(doc.clone())?;
    let seeds_swept = args.key == "protocol.seed";

    // every run's config is validated before any computation starts
    let runs = args
        .values
        .iter()
        .enumerate()
        .map(|(i, raw)| {
            let mut doc = doc.clone();
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            set_path(&mut doc, &args.key, value)?;
            if !seeds_swept {
                set_path(&mut doc, "protocol.seed", sweep_seed(base.seed(), i).into())?;
            }
            let dir = sweep_dir(&base.output.directory, i);
            set_path(&mut doc, "output.directory", dir.to_string_lossy().into_owned().into())?;
            parse_document(doc).map_err(|e| match e {
                CliError::Config(msg) => CliError::Config(format!("{msg} (sweep value {raw})")),
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let results: Vec<Result<Vec<PathBuf>, CliError>> =
        runs.par_iter().map(|cfg| execute(args.run, cfg)).collect();

    let mut index = Table::new(&["run", "value", "seed", "config_sha256", "directory", "status"]);
    for (i, (cfg, result)) in runs.iter().zip(&results).enumerate() {
        let status = match result {
            Ok(_) => "ok".to_string(),
            Err(e) => e.to_string(),
        };
        index.push(vec![
            i.to_string(),
            args.values[i].clone(),
            cfg.seed().to_string(),
            cfg.hash(),
            cfg.output.directory.to_string_lossy().into_owned(),
            status,
        ]);
    }
    write_artifacts(
        &base.output.directory,
        &[Artifact::csv("sweep.csv", index)],
        &[config::Format::Csv],
        &provenance(&base),
        &RunInfo::start("sweep"),
    )?;
    match results.into_iter().find_map(Result::err) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
