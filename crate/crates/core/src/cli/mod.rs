//! The `blstab` command line: strict configs, hash-addressed run directories
//! and per-subcommand pipelines.

mod config;
mod run;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

pub use config::{
    sort_keys, validate_config, ExperimentParams, GridSpec, Overrides, RunConfig, EXPERIMENTS,
    SUBCOMMANDS,
};
pub use run::Outcome;

use crate::error::{BlError, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "blstab",
    version,
    about = "Brascamp-Lieb constants and their stability"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Finiteness, simplicity and geometric verdicts for a datum.
    Check(RunArgs),
    /// Best constant by Gaussian optimization.
    Constant(RunArgs),
    /// Geometric datum equivalent to the given one.
    Reduce(RunArgs),
    /// Fourier-side constant, A_p table and Hausdorff-Young ratios.
    Fourier(RunArgs),
    /// Deficit and distances of a function tuple.
    Deficit(RunArgs),
    /// Distance of one function to the Gaussians.
    Distance(RunArgs),
    /// A named experiment.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        params: ExperimentFlags,
    },
    /// Parse a config and print its canonical form.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentFlags {
    /// Parameter grid `a..b` (log-spaced) for t, δ or ε.
    #[arg(long, visible_aliases = ["deltas", "ts", "eps"])]
    grid: Option<String>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentName {
    Sweep,
    Opt1,
    Opt2,
    Corollary,
    Tuple,
    Holder,
    Complex,
}

impl ExperimentName {
    fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Sweep => "sweep",
            ExperimentName::Opt1 => "opt1",
            ExperimentName::Opt2 => "opt2",
            ExperimentName::Corollary => "corollary",
            ExperimentName::Tuple => "tuple",
            ExperimentName::Holder => "holder",
            ExperimentName::Complex => "complex",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    NumericalFailure,
    Error,
}

/// Deterministic report of a run, written as `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub status: RunStatus,
    pub flags: Vec<String>,
    pub pass: Option<bool>,
    pub result: Value,
}

/// Provenance of a run, written as `record.json`; the only output that
/// carries wall-clock times.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub version: String,
    pub command: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub status: RunStatus,
    pub exit_code: i32,
    pub flags: Vec<String>,
    pub pass: Option<bool>,
    pub result: Value,
    pub error: Option<String>,
    /// Files written next to the record, relative to the run directory.
    pub outputs: Vec<String>,
}

/// Exit code for an error: 2 for bad input, 3 for numerical failures.
pub fn exit_code(e: &BlError) -> i32 {
    match e {
        BlError::Numerical(_) | BlError::Quadrature(_) | BlError::NotPositiveDefinite { .. } => {
            EXIT_NUMERICAL
        }
        _ => EXIT_VALIDATION,
    }
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Holds `<run dir>/.lock` for the lifetime of a run.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<RunLock> {
        let path = dir.join(".lock");
        match File::create_new(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(RunLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(BlError::config(
                "output_dir",
                format!(
                    "{} is locked by another run (remove the lock if it is stale)",
                    dir.display()
                ),
            )),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("BLSTAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        BlError::config(
            "BLSTAB_THREADS",
            format!("expected a positive integer, got {v:?}"),
        )
    })?;
    // a pool may already exist when dispatch runs more than once in a process
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn to_pretty<T: Serialize>(x: &T) -> String {
    let mut s = serde_json::to_string_pretty(x).expect("serializable");
    s.push('\n');
    s
}

/// What [`execute`] leaves behind.
#[derive(Debug)]
pub struct RunOutput {
    pub exit_code: i32,
    pub run_dir: PathBuf,
    pub summary: Summary,
}

/// Runs a loaded config and writes its outputs under
/// `output_dir/<config hash>/`.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    let command = cfg
        .subcommand
        .clone()
        .ok_or_else(|| BlError::config("subcommand", "no subcommand given"))?;
    let hash = cfg.hash();
    let dir = cfg.output_dir.join(&hash);
    fs::create_dir_all(&dir)?;
    let _lock = RunLock::acquire(&dir)?;
    let started = now_ms();

    let outcome = match command.as_str() {
        "check" => run::check(cfg),
        "constant" => run::constant(cfg),
        "reduce" => run::reduce(cfg),
        "fourier" => run::fourier(cfg),
        "deficit" => run::deficit(cfg),
        "distance" => run::distance(cfg),
        "experiment" => run::experiment(cfg),
        other => Err(BlError::config(
            "subcommand",
            format!("unknown subcommand {other:?}"),
        )),
    };

    let mut outputs = vec!["config.json".to_string()];
    fs::write(dir.join("config.json"), to_pretty(&cfg.canonical()))?;
    let (summary, code, error) = match outcome {
        Ok(out) => {
            for (name, body) in &out.files {
                fs::write(dir.join(name), body)?;
                outputs.push(name.clone());
            }
            let (status, code) = if out.flags.is_empty() {
                (RunStatus::Ok, EXIT_OK)
            } else {
                (RunStatus::NumericalFailure, EXIT_NUMERICAL)
            };
            let summary = Summary {
                command: command.clone(),
                config_hash: hash.clone(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                status,
                flags: out.flags,
                pass: out.pass,
                result: out.result,
            };
            fs::write(dir.join("summary.json"), to_pretty(&summary))?;
            outputs.push("summary.json".into());
            (summary, code, None)
        }
        Err(e) => {
            let summary = Summary {
                command: command.clone(),
                config_hash: hash.clone(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                status: RunStatus::Error,
                flags: Vec::new(),
                pass: None,
                result: Value::Null,
            };
            (summary, exit_code(&e), Some(e.to_string()))
        }
    };
    outputs.push("record.json".into());
    let record = RunRecord {
        config_hash: hash,
        version: summary.version.clone(),
        command,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        status: summary.status,
        exit_code: code,
        flags: summary.flags.clone(),
        pass: summary.pass,
        result: summary.result.clone(),
        error: error.clone(),
        outputs,
    };
    fs::write(dir.join("record.json"), to_pretty(&record))?;
    if let Some(e) = error {
        eprintln!("error: {e}");
    }
    Ok(RunOutput {
        exit_code: code,
        run_dir: dir,
        summary,
    })
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return EXIT_VALIDATION;
    }
    let (name, run, params, experiment) = match cli.command {
        Command::Validate { config } => {
            return match validate_config(&config) {
                Ok(c) => {
                    print!("{}", to_pretty(&c.canonical()));
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_VALIDATION
                }
            };
        }
        Command::Check(r) => ("check", r, None, None),
        Command::Constant(r) => ("constant", r, None, None),
        Command::Reduce(r) => ("reduce", r, None, None),
        Command::Fourier(r) => ("fourier", r, None, None),
        Command::Deficit(r) => ("deficit", r, None, None),
        Command::Distance(r) => ("distance", r, None, None),
        Command::Experiment { name, run, params } => {
            ("experiment", run, Some(params), Some(name.as_str()))
        }
    };
    let ov = Overrides {
        subcommand: Some(name.to_string()),
        experiment: experiment.map(str::to_string),
        seed: run.seed,
        restarts: run.restarts,
        output_dir: run.output_dir,
        grid: params.as_ref().and_then(|p| p.grid.clone()),
        points: params.as_ref().and_then(|p| p.points),
        trials: params.as_ref().and_then(|p| p.trials),
        samples: params.as_ref().and_then(|p| p.samples),
    };
    let cfg = match RunConfig::load(&run.config, &ov) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    match execute(&cfg) {
        Ok(out) => {
            if out.summary.status != RunStatus::Error {
                print!("{}", to_pretty(&out.summary));
            }
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
