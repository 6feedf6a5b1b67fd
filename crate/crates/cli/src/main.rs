//! `xlearn`: seeded regret sweeps from the command line.
//!
//! ```text
//! xlearn --algo crosslearn --K 5 --C 5 --T 4096 --T 8192 --seeds 20 --out runs/x
//! xlearn --config sweep.toml --jobs 8
//! xlearn summarize runs/x runs/exp3ix
//! ```
//!
//! Flags override values from `--config`. The output directory defaults to
//! `$XLEARN_OUT_DIR`, then `xlearn-out`. Exit codes: 0 success, 2 invalid
//! configuration or data, 3 I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::{Table, Value};
use xlearn::env::EnvKind;
use xlearn::summary::summarize;
use xlearn::sweep::{run_sweep, Execution, RunConfig, SweepSummary};

const OUT_DIR_VAR: &str = "XLEARN_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "xlearn-out";

#[derive(Parser, Debug)]
#[command(
    name = "xlearn",
    version,
    about = "Seeded regret sweeps for the cross-learning contextual bandit learner and its baselines",
    args_conflicts_with_subcommands = true
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the log-log regret slope of the first sweep directory and compare
    /// it with the others, seed by seed.
    Summarize {
        #[arg(required = true, value_name = "DIR")]
        dirs: Vec<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML file with sweep settings.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Environment: shifting, auction, sleeping or zero.
    #[arg(long, value_name = "KIND")]
    env: Option<String>,
    /// crosslearn, per_context_exp3ix, known_nu_cross or uniform.
    #[arg(long, value_name = "NAME")]
    algo: Option<String>,
    /// Number of arms.
    #[arg(long = "K", value_name = "ARMS")]
    arms: Option<usize>,
    /// Number of contexts.
    #[arg(long = "C", value_name = "CONTEXTS")]
    contexts: Option<usize>,
    /// Horizon; repeat for a scaling sweep.
    #[arg(long = "T", value_name = "HORIZON")]
    horizons: Vec<usize>,
    /// Confidence parameter of the learner's schedule.
    #[arg(long)]
    delta: Option<f64>,
    /// Seeds per horizon.
    #[arg(long, value_name = "N")]
    seeds: Option<usize>,
    #[arg(long, value_name = "SEED")]
    seed_base: Option<u64>,
    /// Keep every Nth round of the regret trajectory.
    #[arg(long, value_name = "N")]
    thin: Option<usize>,
    /// Add the six-term regret decomposition to every report.
    #[arg(long)]
    emit_decomposition: bool,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Run seeds one after another on the calling thread.
    #[arg(long, conflicts_with = "jobs")]
    serial: bool,
    /// Fix the environment seed instead of deriving one per run.
    #[arg(long, value_name = "SEED")]
    env_seed: Option<u64>,
    /// Shifting environment: number of segments.
    #[arg(long)]
    segments: Option<usize>,
    /// Shifting environment: half-width of the loss jitter.
    #[arg(long)]
    jitter: Option<f64>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Io(m) => write!(f, "I/O error: {m}"),
            Failure::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<xlearn::Error> for Failure {
    fn from(e: xlearn::Error) -> Self {
        use xlearn::Error as E;
        match e {
            E::Io { .. } => Failure::Io(e.to_string()),
            E::ReplayMismatch(_) | E::MidEpochFinalize { .. } | E::ZeroProbability(_) => Failure::Internal(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn set<T: Into<Value>>(table: &mut Table, key: &str, value: Option<T>) {
    if let Some(v) = value {
        table.insert(key.to_string(), v.into());
    }
}

fn to_int(x: u64, flag: &str) -> Result<i64, Failure> {
    i64::try_from(x).map_err(|_| Failure::Config(format!("{flag} {x} is too large")))
}

/// Merges the config file (if any) with the flags; flags win.
fn build_config(args: &RunArgs, out_dir_var: Option<PathBuf>) -> Result<RunConfig, Failure> {
    let mut table = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            text.parse::<Table>()
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => Table::new(),
    };

    let mut env = match table.remove("env") {
        Some(Value::Table(t)) => t,
        Some(_) => return Err(Failure::Config("`env` must be a table with a `kind` key".into())),
        None => Table::new(),
    };
    if let Some(kind) = &args.env {
        if env.get("kind").and_then(Value::as_str) != Some(kind.as_str()) {
            env = Table::new();
            env.insert("kind".into(), kind.clone().into());
        }
    }
    env.entry("kind").or_insert_with(|| "shifting".into());
    set(&mut env, "segments", args.segments.map(|s| s as i64));
    set(&mut env, "jitter", args.jitter);
    table.insert("env".into(), env.into());

    set(&mut table, "algo", args.algo.clone());
    table.entry("algo").or_insert_with(|| "crosslearn".into());
    set(&mut table, "arms", args.arms.map(|x| x as i64));
    set(&mut table, "contexts", args.contexts.map(|x| x as i64));
    if !args.horizons.is_empty() {
        let list: Vec<Value> = args.horizons.iter().map(|&t| Value::from(t as i64)).collect();
        table.insert("horizons".into(), list.into());
    }
    set(&mut table, "delta", args.delta);
    set(&mut table, "n_seeds", args.seeds.map(|x| x as i64));
    set(&mut table, "seed_base", args.seed_base.map(|s| to_int(s, "--seed-base")).transpose()?);
    set(&mut table, "thin", args.thin.map(|x| x as i64));
    if args.emit_decomposition {
        table.insert("emit_decomposition".into(), true.into());
    }
    set(&mut table, "jobs", args.jobs.map(|x| x as i64));
    set(&mut table, "env_seed", args.env_seed.map(|s| to_int(s, "--env-seed")).transpose()?);

    let out = args
        .out
        .clone()
        .map(|p| p.to_string_lossy().into_owned())
        .or_else(|| table.get("out_dir").and_then(Value::as_str).map(str::to_string))
        .or_else(|| out_dir_var.map(|p| p.to_string_lossy().into_owned()))
        .unwrap_or_else(|| FALLBACK_OUT_DIR.to_string());
    table.insert("out_dir".into(), out.into());

    let mut config: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Failure::Config(e.message().to_string()))?;
    if let EnvKind::Auction { values, bids } = &config.env {
        if values.is_empty() && bids.is_empty() {
            config.env = EnvKind::with_defaults("auction", config.arms, config.contexts)?;
        }
    }
    config.validate()?;
    Ok(config)
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let config = build_config(args, std::env::var_os(OUT_DIR_VAR).map(PathBuf::from))?;
    let execution = if args.serial { Execution::Serial } else { Execution::Parallel };
    let summary = run_sweep(&config, execution)?;
    for h in &summary.horizons {
        let p = &h.percentiles;
        println!(
            "T={:<8} median={:<12.2} p5={:<12.2} p95={:.2}",
            h.horizon, p.p50, p.p5, p.p95
        );
    }
    println!(
        "{} runs of {} written to {}",
        summary.horizons.len() * summary.seeds.len(),
        config.algo.name(),
        config.out_dir.display()
    );
    Ok(())
}

fn summarize_dirs(dirs: &[PathBuf]) -> Result<(), Failure> {
    let sweeps = dirs
        .iter()
        .map(|d| SweepSummary::load(d))
        .collect::<Result<Vec<_>, _>>()?;
    let report = summarize(&sweeps)?;
    let value = serde_json::to_value(&report).map_err(|e| Failure::Internal(e.to_string()))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&value).map_err(|e| Failure::Internal(e.to_string()))?
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Some(Command::Summarize { dirs }) => summarize_dirs(dirs),
        None => run(&cli.run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xlearn: {e}");
            ExitCode::from(e.code())
        }
    }
}
